"""WAV and CSV file helpers with atomic writes."""
from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np
from scipy.io import wavfile

CSV_VERSION = 1


def read_wav(path):
    """Samples as float64 in [-1, 1) (PCM is scaled) and the sample rate."""
    sr, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        x = data.astype(float) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(float) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(float)
    else:
        raise ValueError(f"{path}: unsupported WAV sample format {data.dtype}")
    return x, int(sr)


def read_mono(path, sample_rate: int) -> np.ndarray:
    x, sr = read_wav(path)
    if sr != sample_rate:
        raise ValueError(f"{path}: sample rate {sr} Hz, {sample_rate} Hz required")
    if x.ndim != 1:
        raise ValueError(f"{path}: expected a mono file, got {x.shape[1]} channels")
    return x


def _atomic_write_bytes(path: Path, payload: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_wav(path, samples, sample_rate: int, dtype=np.float32):
    buf = io.BytesIO()
    wavfile.write(buf, int(sample_rate), np.asarray(samples).astype(dtype))
    _atomic_write_bytes(Path(path), buf.getvalue())


def write_text(path, text: str):
    _atomic_write_bytes(Path(path), text.encode())


def write_csv(path, kind: str, header, rows, comments=()):
    """CSV with a leading ``# <kind> v<version>`` line and optional comment lines."""
    buf = io.StringIO()
    buf.write(f"# spotformer {kind} v{CSV_VERSION}\n")
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    write_text(path, buf.getvalue())


def read_csv(path):
    """Header and rows of a file written by :func:`write_csv` (comment lines skipped)."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]
