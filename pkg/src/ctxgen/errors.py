"""Exception types shared across the toolkit."""


class CtxgenError(Exception):
    """Base class for all toolkit errors."""


class DegenerateSentenceError(CtxgenError):
    """Sentence has no usable content tokens for the requested operation."""


class ZeroVectorError(CtxgenError):
    """Cosine similarity requested against a zero-norm vector."""


class ConfigurationError(CtxgenError):
    """A configuration value is invalid or inconsistent."""


class NumericOverflowError(CtxgenError):
    """A non-finite value appeared inside the network.

    Carries the timestep (and direction, for bidirectional passes) where
    the overflow was first detected.
    """

    def __init__(self, message: str, timestep: int, direction: str = "forward"):
        super().__init__(message)
        self.timestep = timestep
        self.direction = direction


class TrainingDivergedError(CtxgenError):
    """Training loss became NaN; carries the last finite checkpoint."""

    def __init__(self, message: str, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


class UnknownContextWordError(CtxgenError):
    """A user-supplied context word is out of vocabulary.

    ``suggestions`` holds the nearest in-vocabulary words by edit distance.
    """

    def __init__(self, word: str, suggestions: list[str]):
        hint = ", ".join(suggestions) if suggestions else "none"
        super().__init__(f"unknown context word {word!r} (did you mean: {hint})")
        self.word = word
        self.suggestions = suggestions


class NoSignalError(CtxgenError):
    """Every evaluation report was skipped; no defined mean to compare."""


class DependencyError(CtxgenError):
    """An upstream artifact is missing or stale.

    ``stage`` names the pipeline stage that must be rerun.
    """

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage
