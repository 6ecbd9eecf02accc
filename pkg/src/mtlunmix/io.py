"""Files: cubes, spectral libraries, abundance maps, configs and results.

Cubes are stored as a JSON header ``<stem>.json`` next to raw samples
``<stem>.raw``: little-endian float32, band-sequential, pixels of each band
in row-major spatial order. Because ``HsiCube.data`` is already bands x
pixels in that order, the raw file is just ``data.astype('<f4')``.
"""
import csv
import json
import math
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .core import HsiCube, Hyperparams, UnmixError, validate_cube


class FormatError(UnmixError):
    """A file exists but its contents are not what the format requires."""


@dataclass(frozen=True)
class CubeHeader:
    width: int
    height: int
    bands: int
    dtype: str = "f32"
    interleave: str = "bsq"
    byte_order: str = "little"

    def __post_init__(self):
        for name in ("width", "height", "bands"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise FormatError(f"header field {name!r} must be a positive integer, got {v!r}")
        if self.dtype != "f32":
            raise FormatError(f"unsupported dtype {self.dtype!r} (only 'f32')")
        if self.interleave != "bsq":
            raise FormatError(f"unsupported interleave {self.interleave!r} (only 'bsq')")
        if self.byte_order != "little":
            raise FormatError(f"unsupported byte_order {self.byte_order!r} (only 'little')")

    @property
    def nbytes(self):
        return 4 * self.width * self.height * self.bands

    @classmethod
    def from_dict(cls, d):
        _require_keys(d, [f.name for f in fields(cls)], "cube header")
        extra = set(d) - {f.name for f in fields(cls)} - {"wavelengths"}
        if extra:
            raise FormatError(f"unknown cube header keys: {sorted(extra)}")
        return cls(**{f.name: d[f.name] for f in fields(cls)})


def _require_keys(d, keys, what):
    if not isinstance(d, dict):
        raise FormatError(f"{what} must be a JSON object")
    missing = [k for k in keys if k not in d]
    if missing:
        raise FormatError(f"{what} is missing required keys: {', '.join(missing)}")


def _stem(path_stem):
    p = Path(path_stem)
    if p.suffix in (".json", ".raw"):
        p = p.with_suffix("")
    return p


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed JSON ({exc})") from exc


def _dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, allow_nan=False)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Cubes
# ---------------------------------------------------------------------------


def write_cube(cube, path_stem):
    """Write ``<stem>.json`` and ``<stem>.raw``; returns both paths."""
    stem = _stem(path_stem)
    hdr = CubeHeader(cube.width, cube.height, cube.P)
    doc = asdict(hdr)
    if cube.wavelengths is not None:
        doc["wavelengths"] = [float(w) for w in cube.wavelengths]
    raw = np.ascontiguousarray(cube.data, dtype="<f4")
    raw.tofile(str(stem) + ".raw")
    _dump_json(doc, str(stem) + ".json")
    return Path(str(stem) + ".json"), Path(str(stem) + ".raw")


def read_header(path_stem):
    stem = _stem(path_stem)
    doc = _load_json(str(stem) + ".json")
    return CubeHeader.from_dict(doc), doc.get("wavelengths")


def read_cube(path_stem):
    """Read a cube written by :func:`write_cube` (values become float64)."""
    stem = _stem(path_stem)
    hdr, wl = read_header(stem)
    raw_path = str(stem) + ".raw"
    actual = os.path.getsize(raw_path)
    if actual != hdr.nbytes:
        raise FormatError(
            f"{raw_path}: size mismatch, header implies {hdr.nbytes} bytes "
            f"({hdr.bands} bands x {hdr.width}x{hdr.height} x 4), file has {actual}")
    data = np.fromfile(raw_path, dtype="<f4").reshape(hdr.bands, hdr.width * hdr.height)
    if wl is not None and len(wl) != hdr.bands:
        raise FormatError(f"header lists {len(wl)} wavelengths for {hdr.bands} bands")
    return validate_cube(data.astype(np.float64), hdr.width, hdr.height, wl)


def write_matrix(M, path_stem, width, height):
    """Store a K x N matrix (e.g. abundances) in the cube format."""
    M = np.asarray(M, dtype=np.float64)
    return write_cube(validate_cube(M, width, height), path_stem)


# ---------------------------------------------------------------------------
# Spectral libraries
# ---------------------------------------------------------------------------


def read_spectral_library(path):
    """Load a CSV library: header row, then ``wavelength, r_1, ..., r_K``.

    Returns ``(wavelengths, E)`` with rows sorted by ascending wavelength.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise FormatError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    ncol = len(header)
    if ncol < 2:
        raise FormatError(f"{path}: need a wavelength column and at least one spectrum")
    if not body:
        raise FormatError(f"{path}: no data rows")
    values = []
    for i, row in enumerate(body, start=2):
        if len(row) != ncol:
            raise FormatError(f"{path}: ragged row {i} has {len(row)} columns, header has {ncol}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise FormatError(f"{path}: non-numeric cell in row {i}") from None
        if not all(math.isfinite(v) for v in vals):
            raise FormatError(f"{path}: non-finite value in row {i}")
        values.append(vals)
    arr = np.array(values)
    order = np.argsort(arr[:, 0], kind="stable")
    arr = arr[order]
    wl = arr[:, 0]
    dup = np.nonzero(np.diff(wl) == 0)[0]
    if dup.size:
        raise FormatError(f"{path}: duplicate wavelength {wl[dup[0]]:g}")
    return wl, arr[:, 1:]


def write_spectra_csv(E, path, wavelengths=None, names=None):
    E = np.asarray(E, dtype=np.float64)
    P, K = E.shape
    wl = np.arange(P, dtype=np.float64) if wavelengths is None else np.asarray(wavelengths)
    names = names or [f"endmember_{k}" for k in range(K)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["wavelength", *names])
        for p in range(P):
            w.writerow([repr(float(wl[p]))] + [repr(float(v)) for v in E[p]])
    return Path(path)


# ---------------------------------------------------------------------------
# Abundance maps
# ---------------------------------------------------------------------------


def to_bytes(a):
    """``floor(255 * clamp(a, 0, 1) + 0.5)`` as uint8 (half rounds up)."""
    a = np.clip(np.asarray(a, dtype=np.float64), 0.0, 1.0)
    return np.floor(255.0 * a + 0.5).astype(np.uint8)


def write_pgm(img, path):
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())
    return Path(path)


def read_pgm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise FormatError(f"{path}: maxval {maxval} unsupported")
    pixels = np.frombuffer(parts[4], dtype=np.uint8)
    if pixels.size != w * h:
        raise FormatError(f"{path}: expected {w * h} pixels, found {pixels.size}")
    return pixels.reshape(h, w)


def write_abundance_maps(A, width, height, out_dir):
    """One ``abundance_<k>.pgm`` per row of A; returns the paths."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[1] != width * height:
        raise UnmixError(
            f"abundances have {A.shape[-1]} pixels but width*height = {width * height}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [write_pgm(to_bytes(A[k]).reshape(height, width), out_dir / f"abundance_{k}.pgm")
            for k in range(A.shape[0])]


# ---------------------------------------------------------------------------
# Run configuration and results
# ---------------------------------------------------------------------------

CONFIG_KEYS = ("alpha", "beta", "delta", "activation", "widths_e", "widths_a", "iterations",
               "init", "seed", "K", "P", "N", "width", "height")


def config_dict(hp, *, init, seed, K, P, N, width, height):
    d = asdict(hp)
    d["widths_e"] = list(d["widths_e"]) if d["widths_e"] is not None else None
    d["widths_a"] = list(d["widths_a"]) if d["widths_a"] is not None else None
    d.update(init=init, seed=seed, K=K, P=P, N=N, width=width, height=height)
    return {k: d[k] for k in CONFIG_KEYS}


def parse_config(d):
    """Validate a config sub-document; returns ``(Hyperparams, rest)``."""
    _require_keys(d, CONFIG_KEYS, "config")
    extra = set(d) - set(CONFIG_KEYS)
    if extra:
        raise FormatError(f"unknown config keys: {sorted(extra)}")
    hp = Hyperparams(alpha=d["alpha"], beta=d["beta"], delta=d["delta"],
                     activation=d["activation"],
                     widths_e=None if d["widths_e"] is None else tuple(d["widths_e"]),
                     widths_a=None if d["widths_a"] is None else tuple(d["widths_a"]),
                     iterations=d["iterations"])
    rest = {k: d[k] for k in CONFIG_KEYS if k not in {f.name for f in fields(Hyperparams)}}
    return hp, rest


def write_results(path, config, metrics, history, endmembers, timing_seconds):
    """One JSON document; ``endmembers`` (P x K) is stored column-major,
    i.e. as a list of K spectra."""
    E = np.asarray(endmembers, dtype=np.float64)
    doc = {
        "config": config,
        "metrics": metrics,
        "history": [{k: (int(v) if k == "iter" else float(v)) for k, v in r.items()}
                    for r in history],
        "endmembers": [[float(v) for v in E[:, k]] for k in range(E.shape[1])],
        "timing_seconds": float(timing_seconds),
    }
    _dump_json(doc, path)
    return Path(path)


RESULT_KEYS = ("config", "metrics", "history", "endmembers", "timing_seconds")


def read_results(path):
    doc = _load_json(path)
    _require_keys(doc, RESULT_KEYS, "results")
    parse_config(doc["config"])
    return doc


def read_config(path):
    """Parse the ``config`` block of a results file (or a bare config)."""
    doc = _load_json(path)
    if isinstance(doc, dict) and "config" in doc:
        doc = doc["config"]
    return parse_config(doc)
