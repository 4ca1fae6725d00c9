"""Exception and warning types shared across the package."""


class FormatError(ValueError):
    """A serialized key, signature, filter or trace could not be parsed."""


class PrefixExtractionError(ValueError):
    """The configured extractor does not apply to the message."""


class PrefixUnavailable(Exception):
    """Signing refused: every key share for the message's prefix is gone.

    Raised both for prefixes that were punctured and for Bloom false
    positives; the two cases are indistinguishable by design.
    """


class CapacityWarning(UserWarning):
    """More punctures than the filter was sized for; the FP bound no longer holds."""
