"""Exception hierarchy shared by all trajrobust modules."""


class TrajRobustError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(TrajRobustError, ValueError):
    pass


class DomainError(TrajRobustError, ValueError):
    """Input lies outside the domain where an operation is defined."""


class InsufficientDataError(TrajRobustError, ValueError):
    pass


class InsufficientOverlapError(TrajRobustError):
    """Estimate and ground truth do not overlap enough to compute a metric."""


class DegenerateGeometryError(TrajRobustError, ValueError):
    pass


class OutOfSpanError(TrajRobustError, ValueError):
    """Query time falls outside the valid span of a spline."""

    def __init__(self, t: float, span: tuple[float, float]):
        self.t = t
        self.span = span
        super().__init__(f"t={t!r} outside valid span [{span[0]!r}, {span[1]!r}]")


class ParseError(TrajRobustError, ValueError):
    """Malformed trajectory file content, tagged with a 1-based line number."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
