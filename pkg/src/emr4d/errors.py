"""Structured codec errors, split by where corruption was detected."""


class CodecError(Exception):
    """Base class for encode/decode failures."""


class ContainerError(CodecError):
    """The outer container is malformed (magic, version, section framing)."""


class PayloadError(CodecError):
    """A section payload failed to decode."""

    def __init__(self, message: str, byte_offset: int | None = None,
                 section: str | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset
        self.section = section
