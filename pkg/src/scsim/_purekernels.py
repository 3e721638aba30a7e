"""Pure-Python implementations of the hot kernels.

Mirrors ``_ckernels.pyx`` function for function; ``scsim.kernels`` picks one
at import time.  Offsets in raised DecodeErrors are absolute frame offsets.
"""

import math
import struct

from scsim.errors import DecodeError

ETHERTYPE_SV = 0x88BA

_HDR = struct.Struct(">6s6sHHHHH")
_SEQDATA = struct.Struct(">" + "iI" * 8)
_U16 = struct.Struct(">H")
_U32 = struct.Struct(">I")


def encode_length(n):
    if n < 0x80:
        return bytes((n,))
    if n < 0x100:
        return bytes((0x81, n))
    return bytes((0x82, n >> 8, n & 0xFF))


def read_tlv(data, offset, end):
    """Return ``(tag, value_start, value_end)`` for the TLV at ``offset``."""
    if offset + 2 > end:
        raise DecodeError(offset, "truncated TLV header")
    tag = data[offset]
    if tag & 0x1F == 0x1F:
        raise DecodeError(offset, "multi-byte tag not supported")
    n = data[offset + 1]
    pos = offset + 2
    if n & 0x80:
        k = n & 0x7F
        if k == 0:
            raise DecodeError(offset + 1, "indefinite length not supported")
        if k > 2:
            raise DecodeError(offset + 1, "length field too long")
        if pos + k > end:
            raise DecodeError(offset + 1, "truncated length field")
        n = int.from_bytes(data[pos:pos + k], "big")
        pos += k
    if pos + n > end:
        raise DecodeError(offset, "value overruns enclosing element")
    return tag, pos, pos + n


def encode_sv_frame(dst, src, appid, sv_id, smp_cnt, conf_rev, smp_synch, values, quality):
    seq = [0] * 16
    seq[0::2] = values
    seq[1::2] = quality
    body = b"".join((
        b"\x80", encode_length(len(sv_id)), sv_id,
        b"\x82\x02", _U16.pack(smp_cnt),
        b"\x83\x04", _U32.pack(conf_rev),
        b"\x85\x01", bytes((smp_synch,)),
        b"\x87\x40", _SEQDATA.pack(*seq),
    ))
    asdu = b"\x30" + encode_length(len(body)) + body
    seq_asdu = b"\xa2" + encode_length(len(asdu)) + asdu
    content = b"\x80\x01\x01" + seq_asdu
    apdu = b"\x60" + encode_length(len(content)) + content
    return _HDR.pack(dst, src, ETHERTYPE_SV, appid, len(apdu) + 8, 0, 0) + apdu


def decode_sv_apdu(data, offset, end):
    """Decode a savPdu occupying ``data[offset:end]``.

    Returns ``(sv_id, smp_cnt, conf_rev, smp_synch, values, quality)`` with
    ``sv_id`` as raw bytes.
    """
    tag, pos, stop = read_tlv(data, offset, end)
    if tag != 0x60:
        raise DecodeError(offset, "expected savPdu tag 0x60")
    tag, s, e = read_tlv(data, pos, stop)
    if tag != 0x80:
        raise DecodeError(pos, "expected noASDU")
    if e - s != 1 or data[s] != 1:
        raise DecodeError(s, "only one ASDU per frame is supported")
    tag, s, stop = read_tlv(data, e, stop)
    if tag != 0xA2:
        raise DecodeError(e, "expected seqASDU")
    tag, pos, stop = read_tlv(data, s, stop)
    if tag != 0x30:
        raise DecodeError(s, "expected ASDU sequence")

    tag, s, e = read_tlv(data, pos, stop)
    if tag != 0x80:
        raise DecodeError(pos, "expected svID")
    sv_id = bytes(data[s:e])
    pos = e
    tag, s, e = read_tlv(data, pos, stop)
    if tag == 0x81:  # datSet, optional
        pos = e
        tag, s, e = read_tlv(data, pos, stop)
    if tag != 0x82 or e - s != 2:
        raise DecodeError(pos, "expected 2-byte smpCnt")
    smp_cnt = (data[s] << 8) | data[s + 1]
    pos = e
    tag, s, e = read_tlv(data, pos, stop)
    if tag != 0x83 or e - s != 4:
        raise DecodeError(pos, "expected 4-byte confRev")
    conf_rev = _U32.unpack_from(data, s)[0]
    pos = e
    tag, s, e = read_tlv(data, pos, stop)
    if tag == 0x84:  # refrTm, optional
        pos = e
        tag, s, e = read_tlv(data, pos, stop)
    if tag != 0x85 or e - s != 1:
        raise DecodeError(pos, "expected smpSynch")
    smp_synch = data[s]
    if smp_synch > 2:
        raise DecodeError(s, "smpSynch out of range")
    pos = e
    tag, s, e = read_tlv(data, pos, stop)
    if tag == 0x86:  # smpRate, optional
        pos = e
        tag, s, e = read_tlv(data, pos, stop)
    if tag != 0x87 or e - s != 64:
        raise DecodeError(pos, "expected 64-byte seqData")
    seq = _SEQDATA.unpack_from(data, s)
    return sv_id, smp_cnt, conf_rev, smp_synch, seq[0::2], seq[1::2]


class RmsWindow:
    """Fixed-length sample window with an exact running sum of squares.

    Samples are integers, so the running sum never drifts.
    """

    __slots__ = ("size", "_buf", "_head", "count", "sumsq")

    def __init__(self, size):
        if size <= 0:
            raise ValueError("window size must be positive")
        self.size = size
        self._buf = [0] * size
        self._head = 0
        self.count = 0
        self.sumsq = 0

    def push(self, v):
        i = self._head
        old = self._buf[i]
        if self.count == self.size:
            self.sumsq -= old * old
        else:
            self.count += 1
        self._buf[i] = v
        self.sumsq += v * v
        self._head = i + 1 if i + 1 < self.size else 0

    def replace_last(self, v):
        if not self.count:
            self.push(v)
            return
        i = self._head - 1 if self._head else self.size - 1
        old = self._buf[i]
        self.sumsq += v * v - old * old
        self._buf[i] = v

    def clear(self):
        self._buf = [0] * self.size
        self._head = 0
        self.count = 0
        self.sumsq = 0

    @property
    def full(self):
        return self.count == self.size

    def rms(self):
        if not self.count:
            return 0.0
        return math.sqrt(self.sumsq / self.count)

    def values(self):
        """Samples oldest first."""
        if self.count < self.size:
            return self._buf[:self.count]
        return self._buf[self._head:] + self._buf[:self._head]


def window_rms(samples):
    n = len(samples)
    if not n:
        return 0.0
    return math.sqrt(sum(v * v for v in samples) / n)
