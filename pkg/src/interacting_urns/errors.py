from typing import List


class UrnsError(Exception):
    """Base class for every error raised by the package."""


class NonSquare(UrnsError):
    def __init__(self, shape):
        super().__init__(f"interaction matrix must be square, got shape {shape}")
        self.shape = shape


class NegativeEntry(UrnsError):
    def __init__(self, i: int, j: int, value: float):
        super().__init__(f"negative weight {value!r} at ({i}, {j})")
        self.i = i
        self.j = j


class RowSumExceedsOne(UrnsError):
    def __init__(self, i: int, total: float):
        super().__init__(f"row {i} sums to {total!r} > 1")
        self.i = i
        self.total = total


class PositiveEntry(UrnsError):
    def __init__(self, i: int, j: int, value: float):
        super().__init__(
            f"drift matrix entry ({i}, {j}) = {value!r} is positive"
        )
        self.i = i
        self.j = j


class InconsistentClassification(UrnsError):
    """Numeric and structural verdicts disagree (a bug or ill-conditioning)."""


class SingularK(UrnsError):
    pass


class SingularBlock(UrnsError):
    def __init__(self, level: int, index: int):
        super().__init__(
            f"drift block of class {index} at level {level} is singular"
        )
        self.level = level
        self.index = index


class ProbabilityOutOfRange(UrnsError):
    def __init__(self, i: int, value: float):
        super().__init__(f"Bernoulli probability of agent {i} is {value!r}")
        self.i = i
        self.value = value


class StateOutOfRange(UrnsError):
    def __init__(self, i: int, value: float):
        super().__init__(f"state of agent {i} left [0, 1]: {value!r}")
        self.i = i
        self.value = value


class MismatchedShapes(UrnsError):
    pass


class TooFewRuns(UrnsError):
    def __init__(self, n_runs: int, minimum: int):
        super().__init__(f"{n_runs} runs given, at least {minimum} needed")
        self.n_runs = n_runs
        self.minimum = minimum


class NotApplicable(UrnsError):
    pass


class ParseError(UrnsError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class ValidationError(UrnsError):
    def __init__(self, field: str, reason: str):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class ConfigErrors(UrnsError):
    """All problems found in one experiment file, not just the first."""

    def __init__(self, errors: List[UrnsError]):
        super().__init__("\n".join(str(e) for e in errors))
        self.errors = errors
