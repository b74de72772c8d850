"""namecloze: mine masked name-repetition examples and evaluate scorers."""

__version__ = "0.1.0"

from .common import MASK_TOKEN

__all__ = ["MASK_TOKEN", "__version__"]
