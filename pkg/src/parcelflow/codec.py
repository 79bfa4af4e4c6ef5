"""Pipe-delimited label payload with a CRC-8 trailer.

Grammar::

    PMS1|<id>|<weight_g>|<L>x<W>x<H>|<zone>|<M|N>|<F|R>|<addr-pct>|<crc8-hex>

The checksum covers every byte before it, including the last ``|``.
"""

import re

from .core import DEFAULT_ZONES, Fragility, Nature, validate_label
from .errors import ChecksumError, CodecError

VERSION = "PMS1"
N_FIELDS = 9


def _crc8_table(poly=0x07):
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = ((crc << 1) ^ poly) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
        table.append(crc)
    return tuple(table)


_TABLE = _crc8_table()


def crc8(data: bytes) -> int:
    """CRC-8, polynomial 0x07, init 0x00, not reflected, xor-out 0x00."""
    crc = 0
    for b in data:
        crc = _TABLE[crc ^ b]
    return crc


def _needs_escape(b):
    return b < 0x21 or b > 0x7E or b in (0x25, 0x7C)  # '%' and '|'


def pct_encode(text):
    return "".join(f"%{b:02X}" if _needs_escape(b) else chr(b) for b in text.encode("utf-8"))


_PCT_RE = re.compile(r"%([0-9A-F]{2})")


def pct_decode(field):
    """Strict inverse of :func:`pct_encode`; non-canonical escapes are rejected."""
    out = bytearray()
    i = 0
    while i < len(field):
        ch = field[i]
        if ch == "%":
            m = _PCT_RE.match(field, i)
            if not m:
                raise CodecError("malformed percent escape in address", "BAD_STRUCTURE")
            b = int(m.group(1), 16)
            if not _needs_escape(b):
                raise CodecError("non-canonical percent escape in address", "BAD_STRUCTURE")
            out.append(b)
            i += 3
        else:
            b = ord(ch)
            if _needs_escape(b):
                raise CodecError("unescaped byte in address", "BAD_STRUCTURE")
            out.append(b)
            i += 1
    try:
        return out.decode("utf-8")
    except UnicodeDecodeError:
        raise CodecError("address is not valid UTF-8", "BAD_STRUCTURE") from None


def encode(label) -> str:
    L, W, H = label.dims_mm
    prefix = "|".join([
        VERSION,
        label.id,
        str(label.weight_g),
        f"{L}x{W}x{H}",
        label.zone,
        "M" if label.nature is Nature.METALLIC else "N",
        "F" if label.fragility is Fragility.FRAGILE else "R",
        pct_encode(label.address),
    ]) + "|"
    return f"{prefix}{crc8(prefix.encode('ascii')):02X}"


_INT = r"(?:0|[1-9][0-9]*)"
_FIELD_RES = [
    re.compile(r"[A-Z0-9]{12}"),
    re.compile(_INT),
    re.compile(rf"({_INT})x({_INT})x({_INT})"),
    re.compile(r"[A-Z]{2}"),
    re.compile(r"[MN]"),
    re.compile(r"[FR]"),
]
_HEX2 = re.compile(r"[0-9A-F]{2}")


def decode(payload: str, zones=DEFAULT_ZONES):
    """Parse a payload strictly, verify its checksum, then validate the label."""
    if not isinstance(payload, str):
        raise CodecError("payload must be text", "BAD_STRUCTURE")
    try:
        raw = payload.encode("ascii")
    except UnicodeEncodeError:
        raise CodecError("payload contains non-ASCII characters", "BAD_STRUCTURE") from None
    parts = payload.split("|")
    if parts[0] != VERSION:
        raise CodecError(f"unsupported version tag {parts[0][:8]!r}", "BAD_VERSION")
    if len(parts) != N_FIELDS:
        raise CodecError(f"expected {N_FIELDS} fields, got {len(parts)}", "BAD_STRUCTURE")
    for i, (rx, value) in enumerate(zip(_FIELD_RES, parts[1:7]), start=1):
        if not rx.fullmatch(value):
            raise CodecError(f"field {i} malformed: {value!r}", "BAD_STRUCTURE")
    if not _HEX2.fullmatch(parts[8]):
        raise CodecError("checksum must be two uppercase hex digits", "BAD_STRUCTURE")
    address = pct_decode(parts[7])

    expected = crc8(raw[: len(raw) - 2])
    if expected != int(parts[8], 16):
        raise ChecksumError(expected, parts[8])

    dims = tuple(int(g) for g in _FIELD_RES[2].fullmatch(parts[3]).groups())
    return validate_label({
        "id": parts[1],
        "weight_g": int(parts[2]),
        "dims_mm": dims,
        "zone": parts[4],
        "nature": Nature.METALLIC if parts[5] == "M" else Nature.NONMETALLIC,
        "fragility": Fragility.FRAGILE if parts[6] == "F" else Fragility.REGULAR,
        "address": address,
    }, zones)
