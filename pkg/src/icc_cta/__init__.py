"""Independence-checking-coded channel training authentication for OFDM massive MIMO."""

from .code import Codeword, IccCode, code_rate, iep_bruteforce, iep_closed_form, weight_for
from .errors import IccCtaError

__all__ = [
    "Codeword",
    "IccCode",
    "IccCtaError",
    "code_rate",
    "iep_bruteforce",
    "iep_closed_form",
    "weight_for",
]
__version__ = "0.1.0"
