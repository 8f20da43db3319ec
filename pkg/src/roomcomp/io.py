"""File formats: float WAV audio, JSON documents and two-column CSV curves.

Every writer goes through a temporary file in the destination directory and
an ``os.replace`` so readers never see a partial file.
"""

import io
import json
import os
import tempfile

import numpy as np
from scipy.io import wavfile

from roomcomp.dsp import ImpulseResponse


class AudioFileError(ValueError):
    """Unreadable or malformed audio file."""


def _atomic_write(path, data):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_wav(path, samples, sample_rate_hz):
    """Mono 32-bit float WAV."""
    x = np.ascontiguousarray(samples, dtype=np.float32)
    if x.ndim != 1:
        raise ValueError("only mono audio is supported")
    buf = io.BytesIO()
    wavfile.write(buf, int(sample_rate_hz), x)
    _atomic_write(path, buf.getvalue())


def read_wav(path):
    """Samples as float64 and the sample rate.

    Integer PCM is scaled to [-1, 1).
    """
    try:
        fs, x = wavfile.read(os.fspath(path))
    except (ValueError, EOFError, OSError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise AudioFileError(f"{path}: {exc}") from None
    if x.ndim != 1:
        raise AudioFileError(f"{path}: expected mono audio, got {x.shape[1]} channels")
    if np.issubdtype(x.dtype, np.integer):
        x = x.astype(np.float64) / float(np.iinfo(x.dtype).max + 1)
    return x.astype(np.float64), int(fs)


def write_ir(path, ir):
    write_wav(path, ir.samples, ir.sample_rate_hz)


def read_ir(path, direct_onset_index=None):
    x, fs = read_wav(path)
    if x.size == 0:
        raise AudioFileError(f"{path}: empty audio file")
    if not np.all(np.isfinite(x)):
        raise AudioFileError(f"{path}: non-finite samples")
    return ImpulseResponse(x, fs, direct_onset_index)


def write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
    _atomic_write(path, text.encode("utf-8"))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def format_curve_csv(frequencies_hz, values_db, value_name="value_db"):
    """Two-column CSV text with a header and LF line endings.

    Numbers use ``repr`` formatting so values round-trip exactly.
    """
    f = np.asarray(frequencies_hz, dtype=np.float64)
    v = np.asarray(values_db, dtype=np.float64)
    if f.shape != v.shape or f.ndim != 1:
        raise ValueError("frequency and value arrays must be 1-D and equal length")
    lines = [f"frequency_hz,{value_name}"]
    lines.extend(f"{a!r},{b!r}" for a, b in zip(f.tolist(), v.tolist()))
    return "\n".join(lines) + "\n"


def write_curve_csv(path, frequencies_hz, values_db, value_name="value_db"):
    text = format_curve_csv(frequencies_hz, values_db, value_name)
    _atomic_write(path, text.encode("ascii"))


def read_curve_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]
