"""File formats: 16-bit graymaps, versioned binary containers, trace CSV.

Images travel as portable graymaps (binary P5 by default, plain P2
readable and writable) quantized to 16 bits on the [0, 1] scale. Masks,
measurements, and dictionaries use small little-endian containers with
an 8-byte magic and a version word; dictionary round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .cdl import CoupledDictionary
from .transforms import Measurements, SamplingMask

MAGIC_MASK = b"CPLMASK1"
MAGIC_MEAS = b"CPLMEAS1"
MAGIC_DICT = b"CPLDICT1"
VERSION = 1
PGM_MAXVAL = 65535


class FormatError(ValueError):
    """Raised when a file does not parse as the expected container."""


# ---------------------------------------------------------------------------
# portable graymaps


def write_pgm(path, img: np.ndarray, plain: bool = False) -> None:
    """Write an image on the [0, 1] scale as a 16-bit graymap."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("expected a 2D image")
    q = np.round(np.clip(img, 0.0, 1.0) * PGM_MAXVAL).astype(np.uint16)
    rows, cols = img.shape
    path = Path(path)
    if plain:
        lines = [f"P2\n{cols} {rows}\n{PGM_MAXVAL}\n"]
        for r in range(rows):
            lines.append(" ".join(str(v) for v in q[r]) + "\n")
        path.write_text("".join(lines))
    else:
        header = f"P5\n{cols} {rows}\n{PGM_MAXVAL}\n".encode("ascii")
        path.write_bytes(header + q.astype(">u2").tobytes())


def _pgm_tokens(data: bytes):
    # header tokens, skipping whitespace and '#' comments
    pos = 0
    while True:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated graymap header")
        yield data[start:pos], pos


def read_pgm(path) -> np.ndarray:
    """Read a P2 or P5 graymap back to the [0, 1] scale."""
    data = Path(path).read_bytes()
    tokens = _pgm_tokens(data)
    magic, _ = next(tokens)
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"not a graymap: magic {magic!r}")
    (w, _), (h, _), (maxval, end) = (next(tokens) for _ in range(3))
    w, h, maxval = int(w), int(h), int(maxval)
    if w <= 0 or h <= 0 or maxval <= 0:
        raise FormatError("invalid graymap header")
    if magic == b"P2":
        values = np.array(data[end:].split(), dtype=np.int64)
        if values.size != w * h:
            raise FormatError("plain graymap payload has the wrong size")
        q = values.reshape(h, w)
    else:
        payload = data[end + 1 :]
        dtype = ">u2" if maxval > 255 else np.uint8
        expect = w * h * (2 if maxval > 255 else 1)
        if len(payload) < expect:
            raise FormatError("binary graymap payload is truncated")
        q = np.frombuffer(payload[:expect], dtype=dtype).reshape(h, w)
    return q.astype(np.float64) / maxval


# ---------------------------------------------------------------------------
# binary containers


def _read_exact(f, count, what):
    data = f.read(count)
    if len(data) != count:
        raise FormatError(f"truncated {what}")
    return data


def _check_magic(f, magic):
    got = f.read(len(magic))
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    (version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")


def write_mask(path, mask: SamplingMask) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC_MASK)
        f.write(struct.pack("<I", VERSION))
        _write_mask_body(f, mask)


def _write_mask_body(f, mask):
    kind = mask.kind.encode("ascii")[:16].ljust(16, b"\0")
    f.write(struct.pack("<IId", mask.rows, mask.cols, mask.fold))
    f.write(kind)
    f.write(np.ascontiguousarray(mask.sampled, dtype=np.uint8).tobytes())


def read_mask(path) -> SamplingMask:
    with open(path, "rb") as f:
        _check_magic(f, MAGIC_MASK)
        return _read_mask_body(f)


def _read_mask_body(f):
    rows, cols, fold = struct.unpack("<IId", _read_exact(f, 16, "mask header"))
    kind = _read_exact(f, 16, "mask kind").rstrip(b"\0").decode("ascii")
    payload = _read_exact(f, rows * cols, "mask payload")
    sampled = np.frombuffer(payload, dtype=np.uint8).reshape(rows, cols) != 0
    return SamplingMask(sampled=sampled, kind=kind, fold=fold)


def write_measurements(path, y: Measurements) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC_MEAS)
        f.write(struct.pack("<I", VERSION))
        _write_mask_body(f, y.mask)
        f.write(struct.pack("<Q", y.values.size))
        f.write(np.ascontiguousarray(y.values, dtype="<c16").tobytes())


def read_measurements(path) -> Measurements:
    with open(path, "rb") as f:
        _check_magic(f, MAGIC_MEAS)
        mask = _read_mask_body(f)
        (count,) = struct.unpack("<Q", _read_exact(f, 8, "measurement count"))
        if count != mask.num_samples:
            raise FormatError("measurement count disagrees with the mask")
        payload = _read_exact(f, count * 16, "measurement payload")
        values = np.frombuffer(payload, dtype="<c16").copy()
        return Measurements(values=values, mask=mask)


def write_dictionary(path, dct: CoupledDictionary) -> None:
    """Serialize the four matrices column-major; round-trips bit-exactly."""
    with open(path, "wb") as f:
        f.write(MAGIC_DICT)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<II", dct.n, dct.n_atoms))
        for m in (dct.psi_c, dct.phi_c, dct.psi, dct.phi):
            f.write(np.asfortranarray(m, dtype="<f8").tobytes(order="F"))


def read_dictionary(path) -> CoupledDictionary:
    with open(path, "rb") as f:
        _check_magic(f, MAGIC_DICT)
        n, k = struct.unpack("<II", _read_exact(f, 8, "dictionary header"))
        mats = []
        for name in ("psi_c", "phi_c", "psi", "phi"):
            payload = _read_exact(f, n * k * 8, f"{name} payload")
            mats.append(
                np.frombuffer(payload, dtype="<f8").reshape((n, k), order="F").copy()
            )
        return CoupledDictionary(*mats)


# ---------------------------------------------------------------------------
# trace CSV

TRACE_HEADER = "cycle,eps_c,eps_1,psnr,residual,millis"


def write_trace_csv(path, trace) -> None:
    """Per-cycle trace rows; floats use shortest round-trip formatting."""
    lines = [TRACE_HEADER]
    for r in trace.records:
        lines.append(
            f"{r.cycle},{r.eps_c!r},{r.eps_1!r},{r.psnr!r},{r.residual!r},{r.millis!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
