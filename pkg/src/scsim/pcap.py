"""Classic libpcap writer (magic 0xa1b2c3d4, v2.4, Ethernet link type)."""

import struct

PCAP_MAGIC = 0xA1B2C3D4
LINKTYPE_ETHERNET = 1
SNAPLEN = 65535

_FILE_HEADER = struct.Struct("<IHHiIII")
_RECORD_HEADER = struct.Struct("<IIII")


def file_header():
    return _FILE_HEADER.pack(PCAP_MAGIC, 2, 4, 0, 0, SNAPLEN, LINKTYPE_ETHERNET)


def write_pcap(path, packets, epoch_ns=0):
    """Write ``(time_ns, frame_bytes)`` pairs at microsecond precision.

    ``epoch_ns`` is added to every virtual timestamp.
    """
    with open(path, "wb") as fh:
        fh.write(file_header())
        for time_ns, data in packets:
            usec_total = (time_ns + epoch_ns) // 1000
            sec, usec = divmod(usec_total, 1_000_000)
            fh.write(_RECORD_HEADER.pack(sec, usec, len(data), len(data)))
            fh.write(data)


def read_pcap(path):
    """Inverse of :func:`write_pcap`; returns ``(header_fields, [(time_us, bytes)])``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _FILE_HEADER.size:
        raise ValueError("truncated pcap header")
    header = _FILE_HEADER.unpack_from(raw)
    if header[0] != PCAP_MAGIC:
        raise ValueError("not a little-endian microsecond pcap")
    pos = _FILE_HEADER.size
    packets = []
    while pos < len(raw):
        sec, usec, incl, _orig = _RECORD_HEADER.unpack_from(raw, pos)
        pos += _RECORD_HEADER.size
        packets.append((sec * 1_000_000 + usec, raw[pos:pos + incl]))
        pos += incl
    return header, packets
