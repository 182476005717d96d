"""Errors raised while decoding the binary model and dataset-cache files."""


class FileFormatError(Exception):
    """A binary file could not be decoded."""


class BadMagicError(FileFormatError):
    pass


class UnsupportedVersionError(FileFormatError):
    pass


class DimensionError(FileFormatError):
    pass


class TruncatedFileError(FileFormatError):
    pass


class TrailingBytesError(FileFormatError):
    pass
