"""Error types shared across the package; the CLI maps them onto exit codes."""


class ParameterError(ValueError):
    """A run parameter violates one of the documented inequalities."""


class InvariantError(RuntimeError):
    """A numerical invariant that should hold to tolerance was violated."""


class ResourceLimitError(RuntimeError):
    """A projected allocation exceeds the configured memory budget."""
