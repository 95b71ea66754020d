"""Exception hierarchy shared by all treerecon modules."""


class TreeReconError(Exception):
    """Base class for all treerecon errors."""


class InvalidSun(TreeReconError):
    pass


class InvalidConfig(TreeReconError):
    pass


class MissingColors(TreeReconError):
    pass


class SpecMismatch(TreeReconError):
    pass


class EmptyCloud(TreeReconError):
    pass


class MissingTarget(TreeReconError):
    pass


class EmptyFootprint(TreeReconError):
    pass


class MalformedFile(TreeReconError):
    """Base for file parsing errors; carries an optional line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line


class MalformedPly(MalformedFile):
    pass


class MalformedPfm(MalformedFile):
    pass


class MalformedPpm(MalformedFile):
    pass


class MalformedManifest(MalformedFile):
    pass
