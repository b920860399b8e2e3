class FormatError(ValueError):
    """A file does not conform to the expected on-disk format."""


class IntegrityError(FormatError):
    """An index file is corrupt or does not match the data it was built on."""
