"""Exception hierarchy shared by every haff subsystem."""

from __future__ import annotations


class HaffError(Exception):
    """Base class for all domain errors raised by haff."""


# --- language core -------------------------------------------------------

class SvcSyntaxError(HaffError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(f"{line}:{column}: {message}")


class UnterminatedMetaError(SvcSyntaxError):
    pass


class MetaSyntaxError(HaffError):
    pass


class MetaPlacementError(SvcSyntaxError):
    pass


class InvalidTreeError(HaffError):
    def __init__(self, node_id: int, message: str):
        self.node_id = node_id
        super().__init__(f"node {node_id}: {message}")


class UnknownNodeError(HaffError):
    pass


class CycleError(HaffError):
    pass


# --- transformation ------------------------------------------------------

class TransformError(HaffError):
    method: str | None = None

    def __str__(self) -> str:
        base = super().__str__()
        if self.method:
            return f"in method '{self.method}': {base}"
        return base


class UnknownVarSetError(TransformError):
    pass


class NestedFopError(TransformError):
    pass


class UnknownVariableError(TransformError):
    pass


class DuplicateVarSetError(TransformError):
    pass


class DuplicateMethodError(TransformError):
    pass


class AlreadyTransformedError(TransformError):
    pass


class InternalError(TransformError):
    pass


class TransformErrorGroup(TransformError):
    """Several per-method failures from a single transform_unit run."""

    def __init__(self, errors: list[TransformError]):
        self.errors = list(errors)
        super().__init__("; ".join(f"{type(e).__name__}: {e}" for e in self.errors))


# --- failover management -------------------------------------------------

class FomError(HaffError):
    pass


class BackendIoError(FomError):
    pass


class SerializationError(FomError):
    pass


class NoRecordError(FomError):
    pass


class ConfigError(FomError):
    pass


class NoRuleError(ConfigError):
    pass


# --- runtime -------------------------------------------------------------

class SvcRuntimeError(HaffError):
    pass


class UnboundVariableError(SvcRuntimeError):
    pass


# --- cluster simulation --------------------------------------------------

class ScenarioError(HaffError):
    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class DeployError(ScenarioError):
    pass


class NoServerError(HaffError):
    pass


class UnknownPairError(HaffError):
    pass
