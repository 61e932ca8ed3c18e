"""Exception hierarchy. `exit_code` maps onto the CLI contract:
1 usage/config, 2 data, 3 backend/transport."""

from __future__ import annotations


class CraftError(Exception):
    exit_code = 2


class ConfigError(CraftError):
    exit_code = 1


class EmptyGraphError(CraftError):
    pass


class MissingVerbError(CraftError):
    def __init__(self, verb: str, suggestions: list[str] | None = None):
        self.verb = verb
        self.suggestions = suggestions or []
        hint = f" (did you mean: {', '.join(self.suggestions)})" if self.suggestions else ""
        super().__init__(f"verb {verb!r} not in graph{hint}")


class EmptyPriorError(CraftError):
    pass


class LLMPriorError(CraftError):
    exit_code = 3

    def __init__(self, message: str, payload: object = None):
        self.payload = payload
        super().__init__(message)


class TransportError(CraftError):
    exit_code = 3


class FormatError(CraftError):
    pass


class DataError(CraftError):
    pass


class KeyMissingError(CraftError):
    def __init__(self, key: str, suggestions: list[str] | None = None):
        self.key = key
        self.suggestions = suggestions or []
        hint = f"; nearest keys: {', '.join(self.suggestions)}" if self.suggestions else ""
        super().__init__(f"key {key!r} not in store{hint}")


class DimError(CraftError):
    pass


class AlignmentError(CraftError):
    pass


class NumericError(CraftError):
    pass


class LoadError(CraftError):
    pass


class SamplingError(CraftError):
    pass


class MetricError(CraftError):
    pass


class TraceError(CraftError):
    pass
