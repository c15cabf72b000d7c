"""Exception types raised by the engine.

Every error carries enough context (row, offset, path) to locate the
offending data without re-running the pipeline.
"""


class DualCacheError(Exception):
    """Base class for all engine errors."""


# --- embedding container / store ---

class BadMagic(DualCacheError):
    def __init__(self, path, found):
        super().__init__(f"{path}: bad magic at offset 0: {found!r}")
        self.path = path
        self.found = found


class TruncatedFile(DualCacheError):
    def __init__(self, path, expected_bytes, actual_bytes):
        super().__init__(
            f"{path}: truncated payload, expected {expected_bytes} bytes, "
            f"got {actual_bytes}"
        )
        self.path = path
        self.expected_bytes = expected_bytes
        self.actual_bytes = actual_bytes


class DimensionMismatch(DualCacheError):
    pass


class NonFiniteValue(DualCacheError):
    def __init__(self, row, where=""):
        src = f"{where}: " if where else ""
        super().__init__(f"{src}non-finite value in row {row}")
        self.row = row


class NormViolation(DualCacheError):
    def __init__(self, row, norm, where=""):
        src = f"{where}: " if where else ""
        super().__init__(
            f"{src}row {row} declared unit-norm but has norm {norm:.6g}"
        )
        self.row = row
        self.norm = norm


class ZeroNormRow(DualCacheError):
    def __init__(self, row):
        super().__init__(f"row {row} has zero norm, cannot normalize")
        self.row = row


class InsufficientShots(DualCacheError):
    def __init__(self, cls, available, requested):
        super().__init__(
            f"class {cls} has only {available} samples, {requested} requested"
        )
        self.cls = cls
        self.available = available
        self.requested = requested


# --- channel selection ---

class SingleClass(DualCacheError):
    pass


class EmptyShots(DualCacheError):
    pass


class IndexOutOfRange(DualCacheError):
    def __init__(self, index, dim):
        super().__init__(f"channel index {index} out of range for dim {dim}")
        self.index = index
        self.dim = dim


class OddDimension(DualCacheError):
    def __init__(self, dim):
        super().__init__(f"pairwise pooling needs an even dim, got {dim}")
        self.dim = dim


# --- text classifier ---

class TemplateCountMismatch(DualCacheError):
    pass


# --- eval ---

class EmptyList(DualCacheError):
    pass
