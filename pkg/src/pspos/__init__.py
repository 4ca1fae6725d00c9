"""Puncturable signatures from Bloom filters, with a proof-of-stake simulator."""

from .bloom import BloomFilter, BloomParams, derive_params
from .errors import CapacityWarning, FormatError, PrefixExtractionError, PrefixUnavailable
from .ps import (
    PrefixExtractor,
    PublicKey,
    SecretKey,
    Signature,
    is_punctured,
    puncture,
    remaining_capacity,
    setup,
    sign,
    sign_and_puncture,
    sizes,
    verify,
)

__version__ = "0.1.0"
