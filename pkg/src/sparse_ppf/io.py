"""Plain-text readers and writers for spikes, stimuli, spectrograms and results.

Every CSV written here starts with a ``# schema: ...`` line naming the table
layout and its version, followed by a header row.
"""

from __future__ import annotations

import csv
import os
from typing import Iterable, Sequence

import numpy as np

from .model import SpikeTrain, StimulusSequence
from .strf import Spectrogram

SCHEMA_VERSION = "v1"

SERIES_COLUMNS = ("k_or_time", "series_name", "value")
INTERVAL_COLUMNS = ("filter", "window", "time", "coord", "w_hat", "w_desparsified", "sigma_hat", "lo", "hi",
                    "level", "truth", "caveat")
KS_COLUMNS = ("filter", "model_quantile", "empirical_quantile", "band")
ACF_COLUMNS = ("filter", "lag", "acf", "band")


def schema_line(name: str) -> str:
    return f"# schema: sparse_ppf/{name}/{SCHEMA_VERSION}\n"


def _header(path) -> dict[str, str]:
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("#"):
        raise ValueError(f"{path}: missing '#' header line")
    return dict(tok.split("=", 1) for tok in first[1:].split() if "=" in tok)


def _fmt(x: float) -> str:
    return repr(float(x))


# --------------------------------------------------------------------------- spikes / stimulus

def write_spikes(path, train: SpikeTrain) -> None:
    """One 0/1 count per line after a ``# delta=...`` header."""
    with open(path, "w") as fh:
        fh.write(f"# sparse_ppf-spikes {SCHEMA_VERSION} delta={train.delta!r} T={len(train)}\n")
        fh.write("\n".join(str(int(b)) for b in train.bins))
        fh.write("\n")


def read_spikes(path) -> SpikeTrain:
    hdr = _header(path)
    if "delta" not in hdr:
        raise ValueError(f"{path}: spike file header lacks delta=")
    bins = np.loadtxt(path, comments="#", dtype=float, ndmin=1)
    return SpikeTrain(bins, float(hdr["delta"]))


def write_stimulus(path, stim: StimulusSequence) -> None:
    with open(path, "w") as fh:
        fh.write(f"# sparse_ppf-stimulus {SCHEMA_VERSION} pad={stim.pad} T={stim.T}\n")
        np.savetxt(fh, stim.values, fmt="%.17g")


def read_stimulus(path) -> StimulusSequence:
    hdr = _header(path)
    vals = np.loadtxt(path, comments="#", dtype=float, ndmin=1)
    return StimulusSequence(vals, pad=int(hdr.get("pad", 0)))


# --------------------------------------------------------------------------- spectrogram

def write_spectrogram(path, spec: Spectrogram) -> None:
    """Header lines ``key=value`` then ``J`` comma-separated rows of ``T`` values."""
    with open(path, "w") as fh:
        for key, val in (("J", spec.J), ("T", spec.T), ("delta", spec.delta), ("f_lo", spec.f_lo),
                         ("f_hi", spec.f_hi), ("scale", spec.scale)):
            fh.write(f"# {key}={val!r}\n" if isinstance(val, float) else f"# {key}={val}\n")
        np.savetxt(fh, spec.values, fmt="%.17g", delimiter=",")


def read_spectrogram(path) -> Spectrogram:
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = val.strip()
    missing = {"J", "T", "delta", "f_lo", "f_hi"} - meta.keys()
    if missing:
        raise ValueError(f"{path}: spectrogram header missing {sorted(missing)}")
    vals = np.loadtxt(path, comments="#", delimiter=",", ndmin=2)
    J, T = int(meta["J"]), int(meta["T"])
    if vals.shape != (J, T):
        raise ValueError(f"{path}: header says {J}x{T} but data is {vals.shape[0]}x{vals.shape[1]}")
    return Spectrogram(vals, float(meta["delta"]), float(meta["f_lo"]), float(meta["f_hi"]),
                       meta.get("scale", "log"))


# --------------------------------------------------------------------------- result tables

def write_table(path, name: str, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a schema-tagged CSV; floats are written with full precision."""
    with open(path, "w", newline="") as fh:
        fh.write(schema_line(name))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_table(path) -> tuple[str, list[str], list[list[str]]]:
    """Return ``(schema, columns, rows)`` of a CSV written by :func:`write_table`."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# schema:"):
            raise ValueError(f"{path}: missing schema line")
        reader = csv.reader(fh)
        cols = next(reader)
        return first.split(":", 1)[1].strip(), cols, [r for r in reader]


def write_series(path, name: str, series: dict[str, tuple[np.ndarray, np.ndarray]]) -> None:
    """Long-format ``{k_or_time, series_name, value}`` table."""
    rows = ((x, label, v) for label, (xs, vs) in series.items() for x, v in zip(xs, vs))
    write_table(path, name, SERIES_COLUMNS, rows)


def write_matrix(path, name: str, mat: np.ndarray) -> None:
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    cols = [f"c{j}" for j in range(mat.shape[1])]
    write_table(path, name, cols, mat.tolist())


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return str(path)
