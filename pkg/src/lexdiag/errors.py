"""Exception types shared across the engine.

Every contract violation raises a named error so callers can react to the
specific failure instead of pattern-matching message strings.
"""


class LexdiagError(Exception):
    """Base class for all engine errors."""


# ---------------------------------------------------------------------------
# graph construction and masking


class EmptyLabelError(LexdiagError, ValueError):
    """A node label was empty after canonicalization."""


class TooFewFactsError(LexdiagError, ValueError):
    """A graph operation needs more fact nodes than the graph has."""


class SeedNotInGraphError(LexdiagError, KeyError):
    """A seed node for subgraph expansion is not part of the graph."""


class MaskNotSubsetError(LexdiagError, ValueError):
    """A removed-node set is not a subset of the graph's fact nodes."""


# ---------------------------------------------------------------------------
# embeddings


class EmptyTextError(LexdiagError, ValueError):
    """Text to embed was empty or whitespace."""


class ProviderUnavailableError(LexdiagError, RuntimeError):
    """The embedding provider could not be reached."""


# ---------------------------------------------------------------------------
# PU scoring model


class DimensionMismatchError(LexdiagError, ValueError):
    """Tensor shapes disagree with the configured embedding width."""


class EmptyNodeSetError(LexdiagError, ValueError):
    """A forward pass or batch was built over zero nodes."""


class NonFiniteLossError(LexdiagError, ArithmeticError):
    """Training produced a NaN or infinite risk value."""


# ---------------------------------------------------------------------------
# bandit


class OutOfRangeError(LexdiagError, ValueError):
    """A reward component lies outside its declared range."""


class EmptyArmSetError(LexdiagError, ValueError):
    """Arm selection was requested with no arms."""


class HorizonExhaustedError(LexdiagError, RuntimeError):
    """A bandit update was requested past the configured horizon."""


# ---------------------------------------------------------------------------
# LLM gateway


class BackendUnavailableError(LexdiagError, RuntimeError):
    """The configured LLM backend is missing or unreachable."""


class MalformedTokenError(LexdiagError, ValueError):
    """A generated view ends in a bracketed trailer that is not a verdict."""


class ResponseParseError(LexdiagError, ValueError):
    """A backend response did not match the expected shape.

    Carries the raw response and the offset where parsing gave up so the
    failure can be reproduced from the log alone.
    """

    def __init__(self, message: str, raw: str = "", offset: int = 0):
        super().__init__(message)
        self.raw = raw
        self.offset = offset


# ---------------------------------------------------------------------------
# dialogue sessions


class WrongStateError(LexdiagError, RuntimeError):
    """A session operation was called in a state that does not allow it."""


# ---------------------------------------------------------------------------
# corpus and evaluation


class InsufficientCorpusError(LexdiagError, ValueError):
    """Corpus finalization needs more approved records than exist."""


class DegenerateLabelsError(LexdiagError, ValueError):
    """Classification metrics need both classes present in the labels."""


class ConfigError(LexdiagError, ValueError):
    """Configuration file failed validation.

    ``problems`` lists every violation found, not only the first.
    """

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


class CheckpointError(LexdiagError, ValueError):
    """A checkpoint file is missing, unversioned, or incompatible."""
