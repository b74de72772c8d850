"""Trainable masked-LM candidate scorer for the namecloze wire protocol."""

__version__ = "0.1.0"
