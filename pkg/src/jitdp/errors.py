"""Exception types raised across the pipeline stages."""


class JitdpError(Exception):
    """Base class for all pipeline errors."""


# -- mining ------------------------------------------------------------

class RepoNotFound(JitdpError):
    """Path does not contain a readable git repository."""


class CorruptHistory(JitdpError):
    """An object in the history could not be read."""

    def __init__(self, message, hash=None):
        super().__init__(message)
        self.hash = hash


class MissingHistory(JitdpError):
    """The history index lacks prior state required for a commit's metrics."""


# -- szz ---------------------------------------------------------------

class BlameFailure(JitdpError):
    """A pre-image file could not be blamed."""


class UnknownHash(JitdpError):
    """A fix link references a commit outside the mined set."""


# -- dataset -----------------------------------------------------------

class JoinMismatch(JitdpError):
    """A surviving commit lacks metrics, a label, or a text vector."""


class DimMismatch(JitdpError):
    """A vector's dimension disagrees with the expected dimension."""


class DuplicateHash(JitdpError):
    """The same commit hash appears twice in an embedding file."""


class MalformedLine(JitdpError):
    """An input line could not be parsed."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class TooFewInstances(JitdpError):
    """Fewer than the minimum instances required to split."""


# -- fusion ------------------------------------------------------------

class NonFiniteLoss(JitdpError):
    """Training loss diverged to NaN or infinity."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class VersionMismatch(JitdpError):
    """Model file format version is not supported."""


class CorruptFile(JitdpError):
    """Model file is truncated or structurally invalid."""


# -- eval --------------------------------------------------------------

class LengthMismatch(JitdpError):
    """Prediction and label sequences differ in length."""


class EmptyMatrix(JitdpError):
    """Confusion matrix has no counted instances."""


class NoPositives(JitdpError):
    """PR-AUC is undefined without at least one positive label."""


# -- cli ---------------------------------------------------------------

class StageInputMissing(JitdpError):
    """An upstream artifact a stage needs does not exist."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path
