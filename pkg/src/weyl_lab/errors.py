"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ResourceError(RuntimeError):
    """A requested enumeration would exceed the configured memory budget."""

    def __init__(self, message, estimated_count=None):
        super().__init__(message)
        self.estimated_count = estimated_count
