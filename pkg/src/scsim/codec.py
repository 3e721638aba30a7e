"""Ethernet framing and BER-TLV coding of IEC 61850 GOOSE and SV messages.

Frame layout::

    dst(6) | src(6) | ethertype(2) | APPID(2) | Length(2) | Reserved1(2) | Reserved2(2) | APDU

``Length`` counts the eight session-header bytes plus the APDU.  Only
definite-length BER encodings with single-byte context tags are produced or
accepted.  See ``docs/wire_format.md`` for the tag table.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

from scsim import kernels
from scsim.errors import DecodeError, EncodeError

ETHERTYPE_GOOSE = 0x88B8
ETHERTYPE_SV = 0x88BA
IEC61850_ETHERTYPES = (ETHERTYPE_GOOSE, ETHERTYPE_SV)

SAMPLES_PER_SECOND = 4800
SAMPLES_PER_CYCLE = 80
MAX_TEXT_LEN = 65
MAX_APDU_LEN = 1500 - 8
UTC_QUALITY = 0x0A  # clock accurate to 10 fractional bits

_ETH = struct.Struct(">6s6sH")
_SESSION = struct.Struct(">HHHH")
_U32 = struct.Struct(">I")
_U32_MAX = 0xFFFFFFFF


class MacAddress(bytes):
    """Six-octet MAC address; compares equal to its raw bytes."""

    def __new__(cls, octets):
        if isinstance(octets, str):
            return cls.parse(octets)
        octets = bytes(octets)
        if len(octets) != 6:
            raise ValueError(f"MAC address needs 6 octets, got {len(octets)}")
        return super().__new__(cls, octets)

    @classmethod
    def parse(cls, text):
        parts = text.replace("-", ":").split(":")
        if len(parts) != 6:
            raise ValueError(f"bad MAC address {text!r}")
        try:
            return cls(bytes(int(p, 16) for p in parts))
        except ValueError:
            raise ValueError(f"bad MAC address {text!r}") from None

    @property
    def octets(self):
        return bytes(self)

    def is_goose_multicast(self):
        return self[:4] == b"\x01\x0c\xcd\x01"

    def is_sv_multicast(self):
        return self[:4] == b"\x01\x0c\xcd\x04"

    def __str__(self):
        return ":".join(f"{b:02X}" for b in self)

    def __repr__(self):
        return f"MacAddress('{self}')"


@dataclass(frozen=True)
class EthernetHeader:
    dst: MacAddress
    src: MacAddress
    ethertype: int
    appid: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dst", MacAddress(self.dst))
        object.__setattr__(self, "src", MacAddress(self.src))


class SmpSynch(IntEnum):
    NONE = 0
    LOCAL = 1
    GLOBAL = 2


@dataclass(frozen=True)
class GooseApdu:
    gocb_ref: str
    time_allowed_to_live: int
    dat_set: str
    go_id: str
    timestamp: int
    st_num: int
    sq_num: int
    test: bool
    conf_rev: int
    nds_com: bool
    num_dat_set_entries: int
    all_data: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "all_data", tuple(bool(v) for v in self.all_data))


@dataclass(frozen=True)
class SvApdu:
    """One ASDU of a 9-2 light-edition stream.

    ``values`` holds Ia, Ib, Ic, In in milliamperes then Va, Vb, Vc, Vn in
    units of 10 mV; ``quality`` holds the matching quality words.
    """

    sv_id: str
    smp_cnt: int
    conf_rev: int
    smp_synch: SmpSynch = SmpSynch.GLOBAL
    values: tuple = (0,) * 8
    quality: tuple = (0,) * 8

    def __post_init__(self):
        object.__setattr__(self, "smp_synch", SmpSynch(self.smp_synch))
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "quality", tuple(self.quality))

    @property
    def currents(self):
        return self.values[:4]

    @property
    def voltages(self):
        return self.values[4:]


@dataclass(frozen=True)
class OpaqueFrame:
    """A frame that is not GOOSE or SV, kept byte for byte."""

    dst: MacAddress
    src: MacAddress
    ethertype: int
    data: bytes = field(repr=False)


# -- time --------------------------------------------------------------------

def utc_time_encode(ns):
    """Nanoseconds since the epoch -> 8-byte IEC 61850 UtcTime."""
    secs, frac_ns = divmod(ns, 1_000_000_000)
    if not 0 <= secs <= _U32_MAX:
        raise EncodeError("timestamp outside the UtcTime range")
    frac = (frac_ns << 24) // 1_000_000_000
    return _U32.pack(secs) + frac.to_bytes(3, "big") + bytes((UTC_QUALITY,))


def utc_time_decode(raw):
    secs = _U32.unpack_from(raw)[0]
    frac = int.from_bytes(raw[4:7], "big")
    # ceiling division makes encode(decode(x)) == x
    return secs * 1_000_000_000 + -((-frac * 1_000_000_000) >> 24)


def utc_time_quantize(ns):
    """Nearest-below timestamp that survives a UtcTime round trip unchanged."""
    return utc_time_decode(utc_time_encode(ns))


# -- encoding ----------------------------------------------------------------

def _tlv(tag, value):
    return bytes((tag,)) + kernels.encode_length(len(value)) + value


def _text(name, value):
    if not isinstance(value, str):
        raise EncodeError(f"{name} must be text")
    try:
        raw = value.encode("ascii")
    except UnicodeEncodeError:
        raise EncodeError(f"{name} must be ASCII") from None
    if len(raw) > MAX_TEXT_LEN:
        raise EncodeError(f"{name} is {len(raw)} bytes, limit is {MAX_TEXT_LEN}")
    return raw


def _unsigned(name, value, limit=_U32_MAX):
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= limit:
        raise EncodeError(f"{name} must be an integer in [0, {limit}]")
    return value.to_bytes(value.bit_length() // 8 + 1, "big")


def _mac(name, value):
    try:
        return bytes(MacAddress(value))
    except (TypeError, ValueError) as exc:
        raise EncodeError(f"{name}: {exc}") from None


def _frame(dst, src, ethertype, appid, apdu):
    if len(apdu) > MAX_APDU_LEN:
        raise EncodeError(f"APDU of {len(apdu)} bytes exceeds the Ethernet payload limit")
    _unsigned("appid", appid, 0xFFFF)
    return _ETH.pack(_mac("dst", dst), _mac("src", src), ethertype) + _SESSION.pack(appid, len(apdu) + 8, 0, 0) + apdu


def encode_goose(apdu, dst, src, appid):
    """Encode ``apdu`` as a complete Ethernet frame."""
    if apdu.num_dat_set_entries != len(apdu.all_data):
        raise EncodeError("numDatSetEntries does not match allData length")
    if apdu.st_num < 1:
        raise EncodeError("stNum must be at least 1 on the wire")
    members = b"".join(b"\x83\x01\x01" if v else b"\x83\x01\x00" for v in apdu.all_data)
    content = b"".join((
        _tlv(0x80, _text("gocbRef", apdu.gocb_ref)),
        _tlv(0x81, _unsigned("timeAllowedToLive", apdu.time_allowed_to_live)),
        _tlv(0x82, _text("datSet", apdu.dat_set)),
        _tlv(0x83, _text("goID", apdu.go_id)),
        _tlv(0x84, utc_time_encode(apdu.timestamp)),
        _tlv(0x85, _unsigned("stNum", apdu.st_num)),
        _tlv(0x86, _unsigned("sqNum", apdu.sq_num)),
        _tlv(0x87, b"\x01" if apdu.test else b"\x00"),
        _tlv(0x88, _unsigned("confRev", apdu.conf_rev)),
        _tlv(0x89, b"\x01" if apdu.nds_com else b"\x00"),
        _tlv(0x8A, _unsigned("numDatSetEntries", apdu.num_dat_set_entries)),
        _tlv(0xAB, members),
    ))
    return _frame(dst, src, ETHERTYPE_GOOSE, appid, _tlv(0x61, content))


def encode_sv(apdu, dst, src, appid):
    """Encode ``apdu`` as a complete Ethernet frame carrying one ASDU."""
    sv_id = _text("svID", apdu.sv_id)
    _unsigned("smpCnt", apdu.smp_cnt, 0xFFFF)
    _unsigned("confRev", apdu.conf_rev)
    if len(apdu.values) != 8 or len(apdu.quality) != 8:
        raise EncodeError("SV dataset needs exactly 8 value/quality pairs")
    for v in apdu.values:
        if isinstance(v, bool) or not isinstance(v, int) or not -(1 << 31) <= v < (1 << 31):
            raise EncodeError("sample values must be signed 32-bit integers")
    for q in apdu.quality:
        _unsigned("quality", q)
    _unsigned("appid", appid, 0xFFFF)
    return kernels.encode_sv_frame(_mac("dst", dst), _mac("src", src), appid, sv_id, apdu.smp_cnt,
                                   apdu.conf_rev, int(apdu.smp_synch), apdu.values, apdu.quality)


# -- decoding ----------------------------------------------------------------

def parse_header(data):
    """Ethernet and session header of ``data``.  ``appid`` is 0 for non-61850 frames."""
    if len(data) < 14:
        raise DecodeError(0, f"frame of {len(data)} bytes is shorter than an Ethernet header")
    dst, src, ethertype = _ETH.unpack_from(data)
    appid = 0
    if ethertype in IEC61850_ETHERTYPES and len(data) >= 16:
        appid = (data[14] << 8) | data[15]
    return EthernetHeader(MacAddress(dst), MacAddress(src), ethertype, appid)


def _apdu_bounds(data):
    if len(data) < 22:
        raise DecodeError(min(len(data), 14), "truncated IEC 61850 session header")
    appid, length, _, _ = _SESSION.unpack_from(data, 14)
    if length < 8:
        raise DecodeError(16, "length field smaller than the session header")
    if 14 + length > len(data):
        raise DecodeError(16, f"length field {length} exceeds the {len(data) - 14} bytes present")
    return 22, 14 + length


def _ascii(data, start, end, what):
    try:
        return bytes(data[start:end]).decode("ascii")
    except UnicodeDecodeError:
        raise DecodeError(start, f"{what} is not ASCII") from None


def _uint(data, start, end, what):
    if end == start or end - start > 5:
        raise DecodeError(start, f"{what} has invalid length {end - start}")
    value = int.from_bytes(data[start:end], "big", signed=True)
    if value < 0 or value > _U32_MAX:
        raise DecodeError(start, f"{what} out of unsigned 32-bit range")
    return value


def _bool(data, start, end, what):
    if end - start != 1:
        raise DecodeError(start, f"{what} must be a single byte")
    return data[start] != 0


_GOOSE_FIELDS = (
    (0x80, "gocbRef"), (0x81, "timeAllowedToLive"), (0x82, "datSet"), (0x83, "goID"),
    (0x84, "t"), (0x85, "stNum"), (0x86, "sqNum"), (0x87, "test"), (0x88, "confRev"),
    (0x89, "ndsCom"), (0x8A, "numDatSetEntries"), (0xAB, "allData"),
)


def _decode_goose(data, start, end):
    tag, pos, stop = kernels.read_tlv(data, start, end)
    if tag != 0x61:
        raise DecodeError(start, "expected goosePdu tag 0x61")
    spans = []
    for want, name in _GOOSE_FIELDS:
        tag, s, e = kernels.read_tlv(data, pos, stop)
        if tag != want:
            raise DecodeError(pos, f"expected {name} (tag 0x{want:02X}), found 0x{tag:02X}")
        spans.append((s, e))
        pos = e
    (ref, tal, ds, gid, t, st, sq, test, rev, nds, n, alld) = spans
    if t[1] - t[0] != 8:
        raise DecodeError(t[0], "UtcTime must be 8 bytes")
    members = []
    pos, stop = alld
    while pos < stop:
        tag, s, e = kernels.read_tlv(data, pos, stop)
        if tag != 0x83:
            raise DecodeError(pos, f"unsupported dataset member tag 0x{tag:02X}")
        members.append(_bool(data, s, e, "boolean member"))
        pos = e
    count = _uint(data, *n, "numDatSetEntries")
    if count != len(members):
        raise DecodeError(n[0], f"numDatSetEntries {count} but {len(members)} members present")
    return GooseApdu(
        gocb_ref=_ascii(data, *ref, "gocbRef"),
        time_allowed_to_live=_uint(data, *tal, "timeAllowedToLive"),
        dat_set=_ascii(data, *ds, "datSet"),
        go_id=_ascii(data, *gid, "goID"),
        timestamp=utc_time_decode(bytes(data[t[0]:t[1]])),
        st_num=_uint(data, *st, "stNum"),
        sq_num=_uint(data, *sq, "sqNum"),
        test=_bool(data, *test, "test"),
        conf_rev=_uint(data, *rev, "confRev"),
        nds_com=_bool(data, *nds, "ndsCom"),
        num_dat_set_entries=count,
        all_data=tuple(members),
    )


def _decode_sv(data, start, end):
    sv_id, smp_cnt, conf_rev, smp_synch, values, quality = kernels.decode_sv_apdu(data, start, end)
    try:
        sv_id = sv_id.decode("ascii")
    except UnicodeDecodeError:
        raise DecodeError(start, "svID is not ASCII") from None
    return SvApdu(sv_id, smp_cnt, conf_rev, SmpSynch(smp_synch), values, quality)


def decode(data):
    """Decode a frame into ``(EthernetHeader, pdu)``.

    ``pdu`` is a GooseApdu, SvApdu or OpaqueFrame.  Any malformation raises
    DecodeError; no other exception escapes for ``bytes`` input.
    """
    header = parse_header(data)
    if header.ethertype == ETHERTYPE_GOOSE:
        start, end = _apdu_bounds(data)
        return header, _decode_goose(data, start, end)
    if header.ethertype == ETHERTYPE_SV:
        start, end = _apdu_bounds(data)
        return header, _decode_sv(data, start, end)
    return header, OpaqueFrame(header.dst, header.src, header.ethertype, bytes(data))


def decode_frame(data):
    """Decode a frame to its GooseApdu, SvApdu or OpaqueFrame."""
    return decode(data)[1]
