"""Binary time-tag file format (BTAG) and its CSV mirror.

Layout, little-endian throughout:

  header, 32 bytes:
      magic    4 bytes  b"BTAG"
      version  u32      currently 1
      count    u64      number of records
      reserved 16 bytes zero
  records, 16 bytes each:
      timestamp_ns   u64
      pulse_index    u32
      station        u8   (0 = A, 1 = B)
      port_bit       u8   (0 = transmitted, 1 = reflected)
      setting_index  u16  index into the run's settings menu

Records are sorted by (timestamp, station).  The CSV mirror carries one
record per line in the same field order, station written as A/B.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .errors import IntegrityError

MAGIC = b"BTAG"
VERSION = 1
HEADER_SIZE = 32
RECORD_SIZE = 16

STATION_A = 0
STATION_B = 1
STATION_LETTERS = {STATION_A: "A", STATION_B: "B"}

EVENT_DTYPE = np.dtype(
    [
        ("timestamp_ns", "<u8"),
        ("pulse_index", "<u4"),
        ("station", "u1"),
        ("port_bit", "u1"),
        ("setting_index", "<u2"),
    ]
)

CSV_HEADER = "timestamp_ns,pulse_index,station,port_bit,setting_index"

assert EVENT_DTYPE.itemsize == RECORD_SIZE


def _pack_header(count: int) -> bytes:
    buf = bytearray(HEADER_SIZE)
    buf[0:4] = MAGIC
    buf[4:8] = VERSION.to_bytes(4, "little")
    buf[8:16] = int(count).to_bytes(8, "little")
    return bytes(buf)


class BtagWriter:
    """Streaming writer; patches the record count into the header on close.

    Usable as a context manager:

        with BtagWriter(path) as w:
            for chunk in chunks:
                w.write(chunk)
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh: io.BufferedWriter | None = None
        self.count = 0

    def __enter__(self) -> "BtagWriter":
        self._fh = open(self.path, "wb")
        self._fh.write(_pack_header(0))
        return self

    def write(self, events: np.ndarray) -> None:
        if events.dtype != EVENT_DTYPE:
            events = events.astype(EVENT_DTYPE)
        events.tofile(self._fh)
        self.count += events.size

    def __exit__(self, exc_type, exc, tb) -> None:
        fh = self._fh
        self._fh = None
        if exc_type is None:
            fh.seek(0)
            fh.write(_pack_header(self.count))
        fh.close()


def write_btag(path: str | Path, events: np.ndarray) -> None:
    with BtagWriter(path) as writer:
        writer.write(events)


def read_btag(path: str | Path) -> np.ndarray:
    """Read and validate a BTAG file; returns the merged event array."""
    path = Path(path)
    size = path.stat().st_size
    if size < HEADER_SIZE:
        raise IntegrityError(f"{path}: truncated header ({size} bytes)", size)
    with open(path, "rb") as fh:
        header = fh.read(HEADER_SIZE)
        if header[0:4] != MAGIC:
            raise IntegrityError(f"{path}: bad magic {header[0:4]!r}", 0)
        version = int.from_bytes(header[4:8], "little")
        if version != VERSION:
            raise IntegrityError(f"{path}: unsupported version {version}", 4)
        count = int.from_bytes(header[8:16], "little")
        expected = HEADER_SIZE + count * RECORD_SIZE
        if size != expected:
            offset = min(size, expected)
            raise IntegrityError(
                f"{path}: size {size} does not match header count {count}", offset
            )
        return np.fromfile(fh, dtype=EVENT_DTYPE, count=count)


def split_stations(events: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-station views of a merged stream, original order preserved."""
    return (
        events[events["station"] == STATION_A],
        events[events["station"] == STATION_B],
    )


def write_csv(path: str | Path, events: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for rec in events:
            fh.write(
                "%d,%d,%s,%d,%d\n"
                % (
                    rec["timestamp_ns"],
                    rec["pulse_index"],
                    STATION_LETTERS[int(rec["station"])],
                    rec["port_bit"],
                    rec["setting_index"],
                )
            )


def read_csv(path: str | Path) -> np.ndarray:
    letters = {"A": STATION_A, "B": STATION_B, "0": STATION_A, "1": STATION_B}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise IntegrityError(f"{path}: unexpected CSV header {header!r}", 0)
        for line in fh:
            t, p, st, bit, s = line.strip().split(",")
            rows.append((int(t), int(p), letters[st], int(bit), int(s)))
    out = np.array(rows, dtype=EVENT_DTYPE) if rows else np.empty(0, dtype=EVENT_DTYPE)
    return out
