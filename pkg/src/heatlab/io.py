"""On-disk formats: sampled spaces, cached spectra, CSV tables.

A space directory holds

* ``points.csv``: header ``index,x0,x1,...``; coordinates only when the
  sample came from a model, otherwise the index column alone;
* ``distances.bin``: the n x n distance matrix as little-endian float64,
  row-major, no header (8 n^2 bytes);
* ``weights.csv``: header ``index,m``;
* ``meta.json``: descriptor fields plus ``n``, ``spacing`` and the
  sorted list ``core`` of core indices.

``spectrum.bin`` stores the n eigenvalues followed by the n x n
eigenvector matrix (row i = point i, column k = mode k), all
little-endian float64, row-major.  ``spectrum.json`` next to it records
the content hash it was computed from; a mismatch invalidates it.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .spaces import SampledSpace, SpaceDescriptor, SpaceError
from .spectral import CALIBRATION, SpectralDecomposition, auto_bandwidth, build_generator, eigendecompose

CACHE_ENV = "HEATLAB_CACHE"
SPACE_FILES = ("points.csv", "distances.bin", "weights.csv", "meta.json")
LE_F64 = np.dtype("<f8")


def fmt(x) -> str:
    """17 significant digits, the shortest form that round-trips a float64."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return "%.17g" % float(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """UTF-8 CSV with LF line endings and %.17g floats; ``path`` may be an open text stream."""
    if hasattr(path, "write"):
        _write_rows(path, header, rows)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _write_rows(fh, header, rows)


def _write_rows(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# --------------------------------------------------------------------------
# space directories
# --------------------------------------------------------------------------


def save_space(space: SampledSpace, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n = space.n
    if space.coords is not None:
        C = np.asarray(space.coords, dtype=float).reshape(n, -1)
        header = ["index"] + [f"x{k}" for k in range(C.shape[1])]
        write_csv(d / "points.csv", header, ([i, *C[i]] for i in range(n)))
    else:
        write_csv(d / "points.csv", ["index"], ([i] for i in range(n)))
    np.ascontiguousarray(space.D, dtype=LE_F64).tofile(d / "distances.bin")
    write_csv(d / "weights.csv", ["index", "m"], ([i, space.weights[i]] for i in range(n)))
    meta = dict(space.descriptor.to_dict())
    meta.update({"n": n, "spacing": float(space.spacing), "core": [int(i) for i in space.core_indices]})
    with open(d / "meta.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return d


def load_space(directory) -> SampledSpace:
    d = Path(directory)
    missing = [f for f in SPACE_FILES if not (d / f).exists()]
    if missing:
        raise SpaceError(f"{d} is missing {', '.join(missing)}")
    with open(d / "meta.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    desc = SpaceDescriptor.from_dict(meta)
    _, wrows = read_csv(d / "weights.csv")
    w = np.array([float(r[1]) for r in sorted(wrows, key=lambda r: int(r[0]))])
    n = w.size
    raw = np.fromfile(d / "distances.bin", dtype=LE_F64)
    if raw.size != n * n:
        raise SpaceError(f"distances.bin holds {raw.size} values, expected {n * n}")
    D = raw.reshape(n, n).astype(float)
    head, prows = read_csv(d / "points.csv")
    coords = None
    if len(head) > 1:
        prows = sorted(prows, key=lambda r: int(r[0]))
        coords = np.array([[float(v) for v in r[1:]] for r in prows])
    core = np.zeros(n, dtype=bool)
    core[np.asarray(meta.get("core", range(n)), dtype=int)] = True
    return SampledSpace(weights=w, core_mask=core, descriptor=desc, coords=coords, D_explicit=D,
                        spacing_hint=meta.get("spacing"))


def content_hash(space: SampledSpace, h: Optional[float] = None, c: Optional[float] = None) -> str:
    """SHA-256 over the serialized space and the generator parameters."""
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(space.D, dtype=LE_F64).tobytes())
    digest.update(np.ascontiguousarray(space.weights, dtype=LE_F64).tobytes())
    digest.update(json.dumps(space.descriptor.to_dict(), sort_keys=True).encode())
    digest.update(np.ascontiguousarray(space.core_mask, dtype=np.uint8).tobytes())
    h = auto_bandwidth(space) if h is None else float(h)
    c = CALIBRATION if c is None else float(c)
    digest.update(np.array([h, c], dtype=LE_F64).tobytes())
    return digest.hexdigest()


# --------------------------------------------------------------------------
# spectrum cache
# --------------------------------------------------------------------------


def cache_dir(default=None) -> Optional[Path]:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return None if default is None else Path(default)


def save_spectrum(dec: SpectralDecomposition, directory, key: str) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "spectrum.bin", "wb") as fh:
        fh.write(np.ascontiguousarray(dec.values, dtype=LE_F64).tobytes())
        fh.write(np.ascontiguousarray(dec.vectors, dtype=LE_F64).tobytes())
    with open(d / "spectrum.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"hash": key, "n": dec.n}, fh)
        fh.write("\n")
    return d / "spectrum.bin"


def load_spectrum(directory, key: str, gen) -> Optional[SpectralDecomposition]:
    """Cached decomposition, or None when absent or computed from different content."""
    d = Path(directory)
    try:
        with open(d / "spectrum.json", encoding="utf-8") as fh:
            info = json.load(fh)
    except (OSError, ValueError):
        return None
    n = gen.n
    if info.get("hash") != key or info.get("n") != n:
        return None
    raw = np.fromfile(d / "spectrum.bin", dtype=LE_F64)
    if raw.size != n + n * n:
        return None
    return SpectralDecomposition(raw[:n].copy(), raw[n:].reshape(n, n).copy(), gen.m.copy(), gen)


def cached_decompose(space: SampledSpace, directory=None, h: Optional[float] = None) -> SpectralDecomposition:
    """decompose() through the spectrum cache.

    The cache lives in ``$HEATLAB_CACHE/<hash>`` when that variable is
    set, else in ``directory``; with neither there is no caching.
    """
    gen = build_generator(space, h)
    root = cache_dir()
    if root is None and directory is None:
        return eigendecompose(gen)
    key = content_hash(space, gen.h, gen.c)
    target = root / key[:32] if root is not None else Path(directory)
    dec = load_spectrum(target, key, gen)
    if dec is None:
        dec = eigendecompose(gen)
        save_spectrum(dec, target, key)
    return dec

