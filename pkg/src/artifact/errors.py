"""Exception types raised across the toolkit."""


class InvalidInputError(ValueError):
    """Rejected input: wrong shape, out-of-range label, bad config value."""


class ShapeError(InvalidInputError):
    pass


class LabelError(InvalidInputError):
    pass


class DataFormatError(ValueError):
    """A dataset file does not follow its binary layout."""


class FormatError(DataFormatError):
    """Unexpected magic number or container tag."""


class LengthError(DataFormatError):
    """File is truncated or its length does not match the header."""


class ConsistencyError(DataFormatError):
    """Two files that must agree (images vs labels) do not."""
