"""Adaptive binary-renormalized arithmetic coder.

Order-0 adaptive frequency models, one shared context per alphabet size:
counts start at 1 and are halved (rounding up) once the total reaches
2^16.  Streams are decoded against a caller-supplied alphabet schedule,
so the symbol boundaries never need to be embedded in the payload.
"""

from __future__ import annotations

import numpy as np

from .errors import PayloadError

_TOP_BITS = 32
_MASK = (1 << _TOP_BITS) - 1
_HALF = 1 << (_TOP_BITS - 1)
_QUARTER = 1 << (_TOP_BITS - 2)
_THREE_Q = 3 * _QUARTER
_MAX_TOTAL = 1 << 16


class _Contexts:
    """Adaptive counts keyed by alphabet size."""

    def __init__(self):
        self._tables = {}

    def get(self, alphabet: int):
        if alphabet < 1:
            raise ValueError("alphabet size must be >= 1")
        tab = self._tables.get(alphabet)
        if tab is None:
            tab = np.ones(alphabet, dtype=np.int64)
            self._tables[alphabet] = tab
        return tab

    def update(self, alphabet: int, symbol: int) -> None:
        tab = self._tables[alphabet]
        tab[symbol] += 1
        if int(tab.sum()) >= _MAX_TOTAL:
            np.copyto(tab, (tab + 1) // 2)


class _BitWriter:
    def __init__(self):
        self._bits = []

    def put(self, bit: int, pending: int) -> None:
        self._bits.append(bit)
        self._bits.extend([bit ^ 1] * pending)

    def bytes(self) -> bytes:
        bits = self._bits
        out = bytearray((len(bits) + 7) // 8)
        for i, b in enumerate(bits):
            if b:
                out[i >> 3] |= 0x80 >> (i & 7)
        return bytes(out)


class _BitReader:
    """Bit source that pads with zeros past the end, up to a slack budget."""

    def __init__(self, data: bytes, slack_bits: int = _TOP_BITS + 8):
        self._data = data
        self._pos = 0
        self._limit = len(data) * 8 + slack_bits

    def next(self) -> int:
        if self._pos >= self._limit:
            raise PayloadError(
                f"arithmetic payload exhausted at byte {len(self._data)}",
                byte_offset=len(self._data))
        p = self._pos
        self._pos += 1
        if p >= len(self._data) * 8:
            return 0
        return (self._data[p >> 3] >> (7 - (p & 7))) & 1


class AacEncoder:
    def __init__(self):
        self._ctx = _Contexts()
        self._low = 0
        self._high = _MASK
        self._pending = 0
        self._out = _BitWriter()
        self._finished = False

    def encode(self, symbol: int, alphabet: int) -> None:
        if self._finished:
            raise RuntimeError("encoder already finished")
        if not 0 <= symbol < alphabet:
            raise ValueError(f"symbol {symbol} outside alphabet of size {alphabet}")
        counts = self._ctx.get(alphabet)
        cum = np.cumsum(counts)
        total = int(cum[-1])
        c_lo = int(cum[symbol - 1]) if symbol else 0
        c_hi = int(cum[symbol])
        span = self._high - self._low + 1
        self._high = self._low + span * c_hi // total - 1
        self._low = self._low + span * c_lo // total
        while True:
            if self._high < _HALF:
                self._out.put(0, self._pending)
                self._pending = 0
            elif self._low >= _HALF:
                self._out.put(1, self._pending)
                self._pending = 0
                self._low -= _HALF
                self._high -= _HALF
            elif self._low >= _QUARTER and self._high < _THREE_Q:
                self._pending += 1
                self._low -= _QUARTER
                self._high -= _QUARTER
            else:
                break
            self._low = (self._low << 1) & _MASK
            self._high = ((self._high << 1) | 1) & _MASK
        self._ctx.update(alphabet, symbol)

    def finish(self) -> bytes:
        if not self._finished:
            self._pending += 1
            self._out.put(0 if self._low < _QUARTER else 1, self._pending)
            self._pending = 0
            self._finished = True
        return self._out.bytes()


class AacDecoder:
    def __init__(self, data: bytes):
        self._ctx = _Contexts()
        self._bits = _BitReader(data)
        self._low = 0
        self._high = _MASK
        self._code = 0
        for _ in range(_TOP_BITS):
            self._code = (self._code << 1) | self._bits.next()

    def decode(self, alphabet: int) -> int:
        counts = self._ctx.get(alphabet)
        cum = np.cumsum(counts)
        total = int(cum[-1])
        span = self._high - self._low + 1
        val = ((self._code - self._low + 1) * total - 1) // span
        symbol = int(np.searchsorted(cum, val, side="right"))
        c_lo = int(cum[symbol - 1]) if symbol else 0
        c_hi = int(cum[symbol])
        self._high = self._low + span * c_hi // total - 1
        self._low = self._low + span * c_lo // total
        while True:
            if self._high < _HALF:
                pass
            elif self._low >= _HALF:
                self._low -= _HALF
                self._high -= _HALF
                self._code -= _HALF
            elif self._low >= _QUARTER and self._high < _THREE_Q:
                self._low -= _QUARTER
                self._high -= _QUARTER
                self._code -= _QUARTER
            else:
                break
            self._low = (self._low << 1) & _MASK
            self._high = ((self._high << 1) | 1) & _MASK
            self._code = ((self._code << 1) | self._bits.next()) & _MASK
        self._ctx.update(alphabet, symbol)
        return symbol


def aac_encode(symbols, alphabets) -> bytes:
    """Encode a symbol sequence; alphabets may be one int or a sequence."""
    symbols = list(symbols)
    if isinstance(alphabets, int):
        alphabets = [alphabets] * len(symbols)
    else:
        alphabets = list(alphabets)
    if len(alphabets) != len(symbols):
        raise ValueError("alphabet schedule length mismatch")
    enc = AacEncoder()
    for s, a in zip(symbols, alphabets):
        enc.encode(int(s), int(a))
    return enc.finish()


def aac_decode(data: bytes, alphabets) -> list:
    """Decode against an alphabet schedule; lossless inverse of aac_encode."""
    alphabets = list(alphabets)
    if not alphabets:
        return []
    dec = AacDecoder(data)
    return [dec.decode(int(a)) for a in alphabets]
