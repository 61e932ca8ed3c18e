"""CRAFT: commonsense affordance priors fused with visual-semantic similarity
via energy-based iterative re-ranking."""

__version__ = "0.1.0"

from .embeddings import (EmbeddingStore, EmbeddingVector, FileProvider,
                         HttpProvider, cosine, load_store, write_store)
from .engine import (GroundingResult, LoopConfig, SimMatrix, ground_iterative,
                     grounding_energy, rerank_step, select_best, similarity_matrix)
from .errors import CraftError
from .evaluation import (Episode, EvalConfig, LabelTable, Report, accuracy_at_1,
                         distractor_sweep, load_affordance_labels, mrr, ndcg,
                         run_benchmark, sample_episode)
from .graph import (AffordanceGraph, ConceptNode, EgoSubgraph, IngestConfig,
                    ObjectHeuristic, extract_ego_subgraph, filter_object_candidates,
                    ingest_assertions, load_graph, normalize_concept, save_graph)
from .priors import (PriorSet, ReasoningPath, enumerate_paths, llm_prior,
                     score_prior, select_top_k)
from .traces import (ReasoningTrace, export_ego_dot, export_traces_json,
                     extract_trace, read_traces_json, render_ego)

__all__ = [
    "__version__",
    "AffordanceGraph", "ConceptNode", "EgoSubgraph", "IngestConfig",
    "ObjectHeuristic", "extract_ego_subgraph", "filter_object_candidates",
    "ingest_assertions", "load_graph", "normalize_concept", "save_graph",
    "PriorSet", "ReasoningPath", "enumerate_paths", "llm_prior",
    "score_prior", "select_top_k",
    "EmbeddingStore", "EmbeddingVector", "FileProvider", "HttpProvider",
    "cosine", "load_store", "write_store",
    "GroundingResult", "LoopConfig", "SimMatrix", "ground_iterative",
    "grounding_energy", "rerank_step", "select_best", "similarity_matrix",
    "Episode", "EvalConfig", "LabelTable", "Report", "accuracy_at_1",
    "distractor_sweep", "load_affordance_labels", "mrr", "ndcg",
    "run_benchmark", "sample_episode",
    "ReasoningTrace", "export_ego_dot", "export_traces_json", "extract_trace",
    "read_traces_json", "render_ego",
    "CraftError",
]
