"""Exception types raised across the package."""


class SparseGnnError(Exception):
    """Base class for every error raised by sparsegnn."""


class CsrError(SparseGnnError, ValueError):
    """Invalid CSR structure or construction input."""


class DimensionError(SparseGnnError, ValueError):
    """Operand shapes do not agree."""


class DispatchError(SparseGnnError, ValueError):
    """A kernel was requested for inputs it cannot handle."""


class TapeError(SparseGnnError, ValueError):
    """A backward pass was given a tape from a different forward pass."""


class ConfigError(SparseGnnError, ValueError):
    """Invalid parameters for a generator or command."""


class ParseError(SparseGnnError, ValueError):
    """Malformed input file. ``line`` is 1-based (0 when not line specific)."""

    def __init__(self, message: str, line: int = 0, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class KernelMismatchError(SparseGnnError, RuntimeError):
    """Two kernels that must agree bit for bit produced different output."""
