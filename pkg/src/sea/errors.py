"""Exception hierarchy shared across the package."""


class SeaError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(SeaError):
    pass


class ZeroRowError(SeaError):
    def __init__(self, row: int, norm: float):
        super().__init__(f"row {row} has L2 norm {norm:.3e} below 1e-12")
        self.row = row
        self.norm = norm


class NonFiniteInputError(SeaError):
    pass


class WordIdOutOfRangeError(SeaError):
    pass


class EmptyLabelSetError(SeaError):
    pass


class UnknownPieceError(SeaError):
    def __init__(self, word: str, piece: str):
        super().__init__(f"piece {piece!r} of word {word!r} is not in the inventory")
        self.word = word
        self.piece = piece


class TokenIdOutOfRangeError(SeaError):
    pass


class EmptyMaskError(SeaError):
    pass


class TargetOutOfRangeError(SeaError):
    pass


class NegativeLambdaError(SeaError):
    pass


class MismatchedBatchError(SeaError):
    pass


class NonFiniteFunctionError(SeaError):
    pass


class NonFiniteGradientError(SeaError):
    pass


class StepOutOfRangeError(SeaError):
    pass


class EmptyDatasetError(SeaError):
    pass


class CheckpointWriteFailureError(SeaError):
    pass


class BadMagicError(SeaError):
    pass


class VersionUnsupportedError(SeaError):
    pass


class TruncatedPayloadError(SeaError):
    pass


class MissingGroundTruthError(SeaError):
    pass


class EmptyScoresError(SeaError):
    pass


class ConfigError(SeaError):
    pass
