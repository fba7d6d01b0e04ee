class ExporterError(Exception):
    """Base class for exporter failures."""


class ModelLoadError(ExporterError):
    pass


class ImageDecodeError(ExporterError):
    pass


class TokenizerMismatchError(ExporterError):
    pass
