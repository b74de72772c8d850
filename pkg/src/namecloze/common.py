"""Shared constants and exception types."""

MASK_TOKEN = "[MASK]"

PROTOCOL_VERSION = 1


class InputError(Exception):
    """A source file or dataset record could not be read or parsed."""


class DetectorError(Exception):
    """A name detector failed on a passage; carries the detector diagnostics."""


class ProtocolError(Exception):
    """An external process violated the wire protocol (wrong arity, bad message)."""


class TransportError(ProtocolError):
    """The connection to an external process broke; the request may be retried."""
