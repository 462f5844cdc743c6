"""Audio files, resampling and the CSV formats used by the command line."""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps
from scipy.io import wavfile

TARGET_RATE = 16000
MIN_SOURCE_RATE = 8000

__all__ = [
    "AudioBuffer",
    "WavError",
    "load_wav",
    "write_wav",
    "resample_to_16k",
    "resampling_filter",
    "write_csv",
    "read_csv",
    "read_measurements",
    "read_truth",
    "read_track_table",
    "read_f0_track",
]


class WavError(ValueError):
    """Unreadable, truncated or unsupported WAV file."""


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("AudioBuffer holds mono samples only")
        if not np.all(np.isfinite(x)):
            raise ValueError("AudioBuffer samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", x)

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


def _normalize(data):
    kind = data.dtype.kind
    if kind == "f":
        return data.astype(np.float64)
    if kind == "u":
        # 8-bit PCM is offset binary
        bits = 8 * data.dtype.itemsize
        half = 2.0 ** (bits - 1)
        return (data.astype(np.float64) - half) / half
    if kind == "i":
        # scipy left-justifies 24-bit samples in int32
        return data.astype(np.float64) / 2.0 ** (8 * data.dtype.itemsize - 1)
    raise WavError(f"unsupported sample type {data.dtype}")


def load_wav(path):
    """Read a PCM or float WAV file as a mono buffer in [-1, 1] at its own rate.

    Multi-channel files are averaged over channels.
    """
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", wavfile.WavFileWarning)
        try:
            rate, data = wavfile.read(path)
        except FileNotFoundError:
            raise
        except Exception as exc:  # the reader fails in assorted ways on malformed headers
            raise WavError(f"cannot read WAV {path}: {exc}") from exc
    for w in caught:
        if "EOF" in str(w.message) or "truncat" in str(w.message).lower():
            raise WavError(f"truncated WAV {path}: {w.message}")
    x = _normalize(np.asarray(data))
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.ndim != 1:
        raise WavError(f"unexpected WAV data shape {data.shape}")
    if not np.all(np.isfinite(x)):
        raise WavError(f"non-finite samples in {path}")
    return AudioBuffer(x, int(rate))


def write_wav(path, buf):
    """Write a buffer as 32-bit float WAV (no clipping of loud mixtures)."""
    wavfile.write(path, int(buf.sample_rate), buf.samples.astype(np.float32))


def resampling_filter(up, down, source_rate, target_rate=TARGET_RATE):
    """Kaiser-windowed sinc low-pass (unit DC gain) at rate ``up * source_rate``.

    The passband ends at 87.5% of the lower Nyquist frequency and the
    stopband (80 dB) starts at that Nyquist frequency.
    """
    nyq = 0.5 * min(source_rate, target_rate)
    fs_hi = source_rate * up
    edge = 0.875 * nyq
    width = (nyq - edge) / (0.5 * fs_hi)
    numtaps, beta = sps.kaiserord(80.0, width)
    numtaps |= 1
    cutoff = 0.5 * (edge + nyq)
    return sps.firwin(numtaps, cutoff, window=("kaiser", beta), fs=fs_hi)


def resample_to_16k(buf):
    """Polyphase windowed-sinc conversion to 16 kHz; 16 kHz input is returned as is."""
    rate = int(buf.sample_rate)
    if rate != buf.sample_rate:
        raise ValueError(f"non-integer sample rate {buf.sample_rate}")
    if rate < MIN_SOURCE_RATE:
        raise ValueError(f"sample rate {rate} Hz below the supported minimum {MIN_SOURCE_RATE} Hz")
    if rate == TARGET_RATE:
        return buf
    g = math.gcd(TARGET_RATE, rate)
    up, down = TARGET_RATE // g, rate // g
    h = resampling_filter(up, down, rate)
    y = sps.resample_poly(buf.samples, up, down, window=h)
    return AudioBuffer(y, TARGET_RATE)


# -- CSV ---------------------------------------------------------------------

def write_csv(dest, header, rows):
    """Write comma-separated rows with a header and LF line endings.

    ``dest`` is a path or a text stream.
    """
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)

    if hasattr(dest, "write"):
        emit(dest)
    else:
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            emit(fh)


def read_csv(path, required):
    """Rows of a headed CSV as dicts; raises if a required column is missing."""
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise ValueError(f"{path}: empty CSV, header row required")
    missing = [c for c in required if c not in reader.fieldnames]
    if missing:
        raise ValueError(f"{path}: missing column(s) {','.join(missing)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        try:
            rows.append({c: float(row[c]) for c in required})
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad number ({exc})") from exc
    return rows


def read_measurements(path, n_frames=None, hop_s=0.01):
    """Per-frame pitch lists from an ``estimate`` CSV.

    Frames without rows are empty. The stream runs to the last listed frame
    unless ``n_frames`` is given. Returns ``(stream, times)``.
    """
    rows = read_csv(path, ("frame", "time_s", "f0_hz"))
    last = max((int(r["frame"]) for r in rows), default=-1)
    n = last + 1 if n_frames is None else int(n_frames)
    stream = [[] for _ in range(n)]
    times = [k * hop_s for k in range(n)]
    for r in rows:
        k = int(r["frame"])
        if k < 0:
            raise ValueError(f"{path}: negative frame index {k}")
        if k < n:
            stream[k].append(r["f0_hz"])
            times[k] = r["time_s"]
    return stream, times


def read_truth(path):
    """Reference pitch CSV ``time_s,f0_hz`` (0 marks unvoiced)."""
    from .evaluation import GroundTruth

    rows = read_csv(path, ("time_s", "f0_hz"))
    return GroundTruth(np.array([r["time_s"] for r in rows]),
                       np.array([r["f0_hz"] for r in rows]))


def read_track_table(path):
    """Times, pitches and labels of an ``estimate`` or ``track`` CSV.

    Labels are None for estimator output (no ``label`` column).
    """
    with open(path, encoding="utf-8", newline="") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise ValueError(f"{path}: empty CSV, header row required")
    has_label = "label" in header
    cols = ("time_s", "f0_hz", "label") if has_label else ("time_s", "f0_hz")
    rows = read_csv(path, cols)
    times = np.array([r["time_s"] for r in rows], dtype=float)
    f0 = np.array([r["f0_hz"] for r in rows], dtype=float)
    labels = np.array([int(r["label"]) for r in rows], dtype=int) if has_label else None
    return times, f0, labels


def read_f0_track(path):
    """Per-frame pitch for ``synth``: a ``time_s,f0_hz`` CSV.

    Returns ``(f0, hop_s)``; the hop is the median time step (10 ms for a
    single row).
    """
    truth = read_truth(path)
    if truth.f0.size == 0:
        raise ValueError(f"{path}: no rows")
    hop = float(np.median(np.diff(truth.times))) if truth.times.size > 1 else 0.01
    return truth.f0, hop
