# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled hot kernels; behaviour matches ``_purekernels`` exactly."""

from libc.math cimport sqrt
from libc.string cimport memcpy
from cpython.bytes cimport PyBytes_FromStringAndSize, PyBytes_AS_STRING

from scsim.errors import DecodeError

cdef extern from *:
    ctypedef unsigned long long u128 "unsigned __int128"

cdef enum:
    ETHERTYPE_SV = 0x88BA


cdef inline int _put_len(unsigned char *out, int pos, int n):
    if n < 0x80:
        out[pos] = n
        return pos + 1
    if n < 0x100:
        out[pos] = 0x81
        out[pos + 1] = n
        return pos + 2
    out[pos] = 0x82
    out[pos + 1] = n >> 8
    out[pos + 2] = n & 0xFF
    return pos + 3


cdef inline int _len_size(int n):
    if n < 0x80:
        return 1
    if n < 0x100:
        return 2
    return 3


def encode_length(int n):
    cdef unsigned char buf[3]
    cdef int k = _put_len(buf, 0, n)
    return PyBytes_FromStringAndSize(<char *>buf, k)


cdef inline void _put_u32(unsigned char *out, int pos, unsigned int v):
    out[pos] = (v >> 24) & 0xFF
    out[pos + 1] = (v >> 16) & 0xFF
    out[pos + 2] = (v >> 8) & 0xFF
    out[pos + 3] = v & 0xFF


cdef inline unsigned int _get_u32(const unsigned char *p):
    return ((<unsigned int>p[0]) << 24) | ((<unsigned int>p[1]) << 16) | ((<unsigned int>p[2]) << 8) | p[3]


cdef tuple _read_tlv(const unsigned char[:] data, Py_ssize_t offset, Py_ssize_t end):
    cdef Py_ssize_t pos, n, k, i
    cdef int tag
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
        n = 0
        for i in range(k):
            n = (n << 8) | data[pos + i]
        pos += k
    if pos + n > end:
        raise DecodeError(offset, "value overruns enclosing element")
    return tag, pos, pos + n


def read_tlv(data, Py_ssize_t offset, Py_ssize_t end):
    """Return ``(tag, value_start, value_end)`` for the TLV at ``offset``."""
    return _read_tlv(data, offset, end)


def encode_sv_frame(bytes dst, bytes src, unsigned int appid, bytes sv_id, unsigned int smp_cnt,
                    unsigned int conf_rev, unsigned int smp_synch, values, quality):
    cdef int idlen = len(sv_id)
    cdef int body_len = 1 + _len_size(idlen) + idlen + 4 + 6 + 3 + 66
    cdef int asdu_len = 1 + _len_size(body_len) + body_len
    cdef int seq_len = 1 + _len_size(asdu_len) + asdu_len
    cdef int content_len = 3 + seq_len
    cdef int apdu_len = 1 + _len_size(content_len) + content_len
    cdef int total = 22 + apdu_len
    cdef bytes out = PyBytes_FromStringAndSize(NULL, total)
    cdef unsigned char *p = <unsigned char *>PyBytes_AS_STRING(out)
    cdef int pos, i
    cdef long long v
    memcpy(p, PyBytes_AS_STRING(dst), 6)
    memcpy(p + 6, PyBytes_AS_STRING(src), 6)
    p[12] = ETHERTYPE_SV >> 8
    p[13] = ETHERTYPE_SV & 0xFF
    p[14] = (appid >> 8) & 0xFF
    p[15] = appid & 0xFF
    p[16] = ((apdu_len + 8) >> 8) & 0xFF
    p[17] = (apdu_len + 8) & 0xFF
    p[18] = 0
    p[19] = 0
    p[20] = 0
    p[21] = 0
    pos = 22
    p[pos] = 0x60
    pos = _put_len(p, pos + 1, content_len)
    p[pos] = 0x80
    p[pos + 1] = 0x01
    p[pos + 2] = 0x01
    p[pos + 3] = 0xA2
    pos = _put_len(p, pos + 4, asdu_len)
    p[pos] = 0x30
    pos = _put_len(p, pos + 1, body_len)
    p[pos] = 0x80
    pos = _put_len(p, pos + 1, idlen)
    memcpy(p + pos, PyBytes_AS_STRING(sv_id), idlen)
    pos += idlen
    p[pos] = 0x82
    p[pos + 1] = 0x02
    p[pos + 2] = (smp_cnt >> 8) & 0xFF
    p[pos + 3] = smp_cnt & 0xFF
    p[pos + 4] = 0x83
    p[pos + 5] = 0x04
    _put_u32(p, pos + 6, conf_rev)
    p[pos + 10] = 0x85
    p[pos + 11] = 0x01
    p[pos + 12] = smp_synch
    p[pos + 13] = 0x87
    p[pos + 14] = 0x40
    pos += 15
    for i in range(8):
        v = values[i]
        _put_u32(p, pos, <unsigned int>(v & 0xFFFFFFFF))
        _put_u32(p, pos + 4, <unsigned int>quality[i])
        pos += 8
    return out


def decode_sv_apdu(data, Py_ssize_t offset, Py_ssize_t end):
    """Decode a savPdu occupying ``data[offset:end]``."""
    cdef const unsigned char[:] d = data
    cdef Py_ssize_t pos, s, e, stop
    cdef int tag, i
    cdef unsigned int smp_cnt, conf_rev, smp_synch
    cdef const unsigned char *q
    tag, pos, stop = _read_tlv(d, offset, end)
    if tag != 0x60:
        raise DecodeError(offset, "expected savPdu tag 0x60")
    tag, s, e = _read_tlv(d, pos, stop)
    if tag != 0x80:
        raise DecodeError(pos, "expected noASDU")
    if e - s != 1 or d[s] != 1:
        raise DecodeError(s, "only one ASDU per frame is supported")
    tag, s, stop = _read_tlv(d, e, stop)
    if tag != 0xA2:
        raise DecodeError(e, "expected seqASDU")
    tag, pos, stop = _read_tlv(d, s, stop)
    if tag != 0x30:
        raise DecodeError(s, "expected ASDU sequence")

    tag, s, e = _read_tlv(d, pos, stop)
    if tag != 0x80:
        raise DecodeError(pos, "expected svID")
    sv_id = bytes(data[s:e])
    pos = e
    tag, s, e = _read_tlv(d, pos, stop)
    if tag == 0x81:
        pos = e
        tag, s, e = _read_tlv(d, pos, stop)
    if tag != 0x82 or e - s != 2:
        raise DecodeError(pos, "expected 2-byte smpCnt")
    smp_cnt = (d[s] << 8) | d[s + 1]
    pos = e
    tag, s, e = _read_tlv(d, pos, stop)
    if tag != 0x83 or e - s != 4:
        raise DecodeError(pos, "expected 4-byte confRev")
    conf_rev = _get_u32(&d[s])
    pos = e
    tag, s, e = _read_tlv(d, pos, stop)
    if tag == 0x84:
        pos = e
        tag, s, e = _read_tlv(d, pos, stop)
    if tag != 0x85 or e - s != 1:
        raise DecodeError(pos, "expected smpSynch")
    smp_synch = d[s]
    if smp_synch > 2:
        raise DecodeError(s, "smpSynch out of range")
    pos = e
    tag, s, e = _read_tlv(d, pos, stop)
    if tag == 0x86:
        pos = e
        tag, s, e = _read_tlv(d, pos, stop)
    if tag != 0x87 or e - s != 64:
        raise DecodeError(pos, "expected 64-byte seqData")
    q = &d[s]
    values = tuple([<int>_get_u32(q + 8 * i) for i in range(8)])
    quality = tuple([_get_u32(q + 8 * i + 4) for i in range(8)])
    return sv_id, smp_cnt, conf_rev, smp_synch, values, quality


cdef class RmsWindow:
    """Fixed-length sample window with an exact running sum of squares."""

    cdef long long *_buf
    cdef readonly int size
    cdef readonly int count
    cdef int _head
    cdef u128 _sumsq
    cdef object _keep

    def __cinit__(self, int size):
        if size <= 0:
            raise ValueError("window size must be positive")
        self._keep = bytearray(8 * size)
        self._buf = <long long *><char *>self._keep
        self.size = size
        self._head = 0
        self.count = 0
        self._sumsq = 0

    cpdef void push(self, long long v):
        cdef int i = self._head
        cdef long long old = self._buf[i]
        if self.count == self.size:
            self._sumsq -= <u128>(old * old)
        else:
            self.count += 1
        self._buf[i] = v
        self._sumsq += <u128>(v * v)
        self._head = i + 1 if i + 1 < self.size else 0

    cpdef void replace_last(self, long long v):
        cdef int i
        cdef long long old
        if self.count == 0:
            self.push(v)
            return
        i = self._head - 1 if self._head else self.size - 1
        old = self._buf[i]
        self._sumsq -= <u128>(old * old)
        self._sumsq += <u128>(v * v)
        self._buf[i] = v

    cpdef void clear(self):
        cdef int i
        for i in range(self.size):
            self._buf[i] = 0
        self._head = 0
        self.count = 0
        self._sumsq = 0

    @property
    def full(self):
        return self.count == self.size

    @property
    def sumsq(self):
        cdef unsigned long long hi = <unsigned long long>(self._sumsq >> 64)
        cdef unsigned long long lo = <unsigned long long>self._sumsq
        return (int(hi) << 64) | int(lo)

    cpdef double rms(self):
        if self.count == 0:
            return 0.0
        return sqrt(<double>self._sumsq / self.count)

    def values(self):
        """Samples oldest first."""
        cdef int i
        if self.count < self.size:
            return [self._buf[i] for i in range(self.count)]
        return [self._buf[(self._head + i) % self.size] for i in range(self.size)]


def window_rms(samples):
    cdef Py_ssize_t n = len(samples)
    if n == 0:
        return 0.0
    return sqrt(sum([v * v for v in samples]) / n)
