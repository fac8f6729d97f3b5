"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class IvmError(Exception):
    """Base class for every error raised by this package."""


# storage
class StorageError(IvmError):
    pass


class DuplicateTable(StorageError):
    pass


class UnknownTable(StorageError):
    pass


class UnknownPartitionColumn(StorageError):
    pass


class SchemaMismatch(StorageError):
    pass


class PredicateTypeError(StorageError):
    pass


class VersionOutOfRange(StorageError):
    pass


class InvalidCommit(StorageError):
    pass


# ir / analysis
class PlanError(IvmError):
    pass


class UnresolvedColumn(PlanError):
    pass


class TypeMismatch(PlanError):
    pass


class NormalizationDidNotConverge(PlanError):
    pass


class RuntimeTypeError(IvmError):
    pass


class MissingUdfSignature(IvmError):
    pass


class NotIncrementalizable(IvmError):
    """The plan cannot be maintained incrementally; callers fall back to full recompute."""


class MissingBackingState(IvmError):
    pass


# apply
class ApplyError(IvmError):
    pass


class StaleProvenance(ApplyError):
    pass


class NegativeGroupCount(ApplyError):
    pass


class RowOutsidePartition(ApplyError):
    pass


# pipeline
class CycleDetected(IvmError):
    pass


class RefreshFailed(IvmError):
    pass


class SqlSyntaxError(IvmError):
    pass


class Mismatch(IvmError):
    """Differential harness found incremental and full results disagreeing."""

    def __init__(self, message: str, repro: dict | None = None):
        super().__init__(message)
        self.repro = repro
