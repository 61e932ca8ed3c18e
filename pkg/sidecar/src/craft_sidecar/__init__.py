"""HTTP embedding sidecar: text/image encoders, verb similarity and CEMB export."""

__version__ = "0.1.0"

from .app import create_app
from .encoders import DIM, HashedEncoder, make_encoder
from .export import export_store, load_manifest
from .wordvec import WordVecTable

__all__ = ["__version__", "create_app", "DIM", "HashedEncoder", "make_encoder",
           "export_store", "load_manifest", "WordVecTable"]
