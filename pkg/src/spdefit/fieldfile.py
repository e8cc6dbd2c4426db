"""Binary persistence of field datasets plus JSON/CSV report emission.

Field file layout (all integers and floats little-endian):

    offset  size  content
    0       6     magic bytes b"SPDEF1"
    6       2     format version, u16 (currently 1)
    8       8     n_time  (N), u64
    16      8     n_space (M), u64
    24      8     horizon (T), f64
    32      32    theta0, theta1, theta2, sigma, 4 x f64
    64      8     n_modes (K), u64
    72      8     seed, u64 (two's complement of the signed seed)
    80      -     body: (N+1) slices of M f64 values in time order

Every written file gets a JSON sidecar at ``<path>.json`` carrying the
effective configuration, the seed, and the RNG provenance string, enough
to regenerate the file exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import (BadMagicError, HeaderMismatchError, TruncatedFieldError,
                     ValidationError, VersionError)
from .model import SpdeParams
from .simulate import PROVENANCE, FieldDataset, GridSpec, simulate_field

MAGIC = b"SPDEF1"
VERSION = 1
_HEADER = struct.Struct("<6sHQQdddddQQ")
HEADER_SIZE = _HEADER.size  # 80 bytes

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class FieldHeader:
    """Decoded header of a field file."""

    spec: GridSpec
    params: SpdeParams
    seed: int

    @property
    def n_slices(self) -> int:
        return self.spec.n_time + 1


def _pack_header(spec: GridSpec, params: SpdeParams, seed: int) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, spec.n_time, spec.n_space, spec.horizon,
                        params.theta0, params.theta1, params.theta2, params.sigma,
                        spec.n_modes, seed & _MASK64)


def _unpack_header(raw: bytes) -> FieldHeader:
    if len(raw) < HEADER_SIZE:
        raise TruncatedFieldError(
            f"file ends inside the header ({len(raw)} of {HEADER_SIZE} bytes)")
    magic, version, n, m, horizon, t0, t1, t2, sigma, k, seed = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionError(f"unsupported format version {version}, expected {VERSION}")
    spec = GridSpec(n_time=n, n_space=m, horizon=horizon, n_modes=k)
    params = SpdeParams(theta0=t0, theta1=t1, theta2=t2, sigma=sigma)
    # Stored as u64; recover the signed value.
    if seed >= 1 << 63:
        seed -= 1 << 64
    return FieldHeader(spec=spec, params=params, seed=seed)


def config_sidecar(spec: GridSpec, params: SpdeParams, seed: int,
                   extra: dict | None = None) -> dict:
    doc = {
        "params": {"theta0": params.theta0, "theta1": params.theta1,
                   "theta2": params.theta2, "sigma": params.sigma},
        "grid": {"n_time": spec.n_time, "n_space": spec.n_space,
                 "horizon": spec.horizon, "n_modes": spec.n_modes},
        "seed": seed,
        "provenance": PROVENANCE,
        "format": {"magic": MAGIC.decode(), "version": VERSION},
    }
    if extra:
        doc.update(extra)
    return doc


def dump_json(doc: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


class FieldWriter:
    """Slice sink that streams a field into the binary format."""

    def __init__(self, path: str | Path, spec: GridSpec, params: SpdeParams,
                 seed: int, sidecar: bool = True):
        self.path = Path(path)
        self.spec = spec
        self._expected = spec.n_space
        self._count = 0
        self._fh = open(self.path, "wb")
        self._fh.write(_pack_header(spec, params, seed))
        if sidecar:
            dump_json(config_sidecar(spec, params, seed),
                      self.path.with_name(self.path.name + ".json"))

    def __call__(self, i: int, values: np.ndarray) -> None:
        if i != self._count:
            raise ValidationError(f"slices must arrive in order; got {i}, expected {self._count}")
        if len(values) != self._expected:
            raise ValidationError(
                f"slice {i} has {len(values)} values, grid expects {self._expected}")
        self._fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())
        self._count += 1

    def close(self) -> None:
        self._fh.close()
        if self._count != self.spec.n_time + 1:
            raise HeaderMismatchError(
                f"wrote {self._count} slices, header promises {self.spec.n_time + 1}")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._fh.close()
        return False


def write_field(path: str | Path, dataset: FieldDataset) -> None:
    """Persist a materialized dataset (round-trips byte-identically)."""
    with FieldWriter(path, dataset.spec, dataset.params, dataset.seed) as writer:
        for i, row in enumerate(dataset.iter_slices()):
            writer(i, row)


def simulate_to_file(params: SpdeParams, spec: GridSpec, seed: int,
                     path: str | Path) -> FieldDataset:
    """Stream a fresh simulation straight into a field file."""
    with FieldWriter(path, spec, params, seed) as writer:
        summary = simulate_field(params, spec, seed, sink=writer)
    return summary


def read_header(path: str | Path) -> FieldHeader:
    with open(path, "rb") as fh:
        header = _unpack_header(fh.read(HEADER_SIZE))
    size = Path(path).stat().st_size
    expected = HEADER_SIZE + header.n_slices * header.spec.n_space * 8
    if size < expected:
        body_bytes = size - HEADER_SIZE
        slice_bytes = header.spec.n_space * 8
        raise TruncatedFieldError(
            f"body holds {body_bytes // slice_bytes} complete slices "
            f"(truncated inside slice {body_bytes // slice_bytes}), "
            f"header promises {header.n_slices}")
    if size > expected:
        raise HeaderMismatchError(
            f"file has {size - expected} trailing bytes beyond the "
            f"{header.n_slices} slices promised by the header")
    return header


def iter_field_slices(path: str | Path) -> Iterator[np.ndarray]:
    """Validate the file, then yield slices one at a time (O(M) memory)."""
    header = read_header(path)
    m = header.spec.n_space
    with open(path, "rb") as fh:
        fh.seek(HEADER_SIZE)
        for i in range(header.n_slices):
            raw = fh.read(m * 8)
            if len(raw) != m * 8:
                raise TruncatedFieldError(f"file ends inside slice {i}")
            yield np.frombuffer(raw, dtype="<f8")


def read_field(path: str | Path) -> FieldDataset:
    """Load a field file into a materialized dataset."""
    header = read_header(path)
    with open(path, "rb") as fh:
        fh.seek(HEADER_SIZE)
        body = np.fromfile(fh, dtype="<f8", count=header.n_slices * header.spec.n_space)
    if body.size != header.n_slices * header.spec.n_space:
        raise TruncatedFieldError("file ends inside the slice body")
    values = body.reshape(header.n_slices, header.spec.n_space)
    return FieldDataset(spec=header.spec, params=header.params, seed=header.seed,
                        values=values)
