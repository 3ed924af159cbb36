"""Binary model format for :class:`~incsfa.unit.IncSFAUnit`.

Layout (all integers little-endian)::

    magic      4s   b"ISFA"
    version    u16
    flags      u16  bit 0: mean present, bit 1: previous frame present
    input_dim  u32
    dim        u32  expanded input dimension
    K          u32
    J          u32
    meta_len   u32
    meta       JSON (utf-8): config, counters, rng state
    arrays     float64 little-endian, fixed order (see ``_array_shapes``)
    crc32      u32  over every preceding byte

See ``docs/format.md`` for the full description.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .atomic import write_bytes_atomic
from .errors import ChecksumError, FormatError
from .unit import IncSFAUnit, UnitConfig

MAGIC = b"ISFA"
VERSION = 1
_HEADER = struct.Struct("<4sHHIIIII")
_CRC = struct.Struct("<I")

FLAG_MEAN = 1
FLAG_PREV = 2


def _array_shapes(dim: int, k: int, j: int, flags: int) -> list[tuple[str, tuple]]:
    shapes = []
    if flags & FLAG_MEAN:
        shapes += [("mean", (dim,)), ("variance", (dim,))]
    shapes += [
        ("pcs", (k, dim)),
        ("gamma_v1", (k,)),
        ("w", (j, k)),
        ("dz_sq", (k,)),
        ("dy_sq", (j,)),
    ]
    if flags & FLAG_PREV:
        shapes += [("prev_z", (k,)), ("prev_x", (dim,))]
    return shapes


def _arrays(unit: IncSFAUnit, flags: int) -> dict[str, np.ndarray]:
    out = {}
    if flags & FLAG_MEAN:
        out["mean"] = unit.moments.mean
        out["variance"] = unit.moments.variance
    out.update(
        pcs=unit.pcs.vectors,
        gamma_v1=unit.gamma_est.v1,
        w=unit.sfs.w,
        dz_sq=unit.dz_sq,
        dy_sq=unit.dy_sq,
    )
    if flags & FLAG_PREV:
        out["prev_z"] = unit.prev_z
        out["prev_x"] = unit.prev_x
    return out


def _meta(unit: IncSFAUnit) -> dict:
    return {
        "config": unit.config.to_dict(),
        "t": unit.t,
        "n_deriv": unit.n_deriv,
        "n_episodes": unit.n_episodes,
        "moments_count": unit.moments.count,
        "pcs_n_init": unit.pcs.n_init,
        "pcs_t": unit.pcs.t,
        "gamma_initialized": unit.gamma_est.initialized,
        "gamma_t": unit.gamma_est.t,
        "sfs_n_init": unit.sfs.n_init,
        "sfs_t": unit.sfs.t,
        "eta_ref": unit.eta_ref,
        "s_ref": unit.s_ref,
        "prev_total": unit.prev_total,
        "rng": unit.rng.bit_generator.state,
        "provenance": unit.provenance,
    }


def dumps(unit: IncSFAUnit) -> bytes:
    """Serialize the complete state of a unit."""
    flags = 0
    if unit.moments.mean is not None:
        flags |= FLAG_MEAN
    if unit.prev_z is not None:
        flags |= FLAG_PREV
    meta = json.dumps(_meta(unit), sort_keys=True, allow_nan=True).encode()
    dim = unit.config.expanded_dim
    parts = [
        _HEADER.pack(
            MAGIC, VERSION, flags, unit.config.input_dim, dim, unit.k, unit.J, len(meta)
        ),
        meta,
    ]
    arrays = _arrays(unit, flags)
    for name, shape in _array_shapes(dim, unit.k, unit.J, flags):
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        if a.shape != shape:
            raise FormatError(f"array {name} has shape {a.shape}, expected {shape}")
        parts.append(a.tobytes())
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body))


def read_header(data: bytes) -> dict:
    """Decode only the fixed header (no checksum verification)."""
    if len(data) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, flags, input_dim, dim, k, j, meta_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported format version {version} (expected {VERSION})")
    return dict(flags=flags, input_dim=input_dim, dim=dim, K=k, J=j, meta_len=meta_len)


def loads(data: bytes) -> IncSFAUnit:
    """Rebuild a unit from :func:`dumps` output; raises :class:`FormatError`."""
    data = bytes(data)
    if len(data) < _HEADER.size + _CRC.size:
        raise FormatError("truncated model file")
    h = read_header(data)
    body, (crc,) = data[: -_CRC.size], _CRC.unpack(data[-_CRC.size :])
    if zlib.crc32(body) != crc:
        raise ChecksumError("checksum mismatch")
    off = _HEADER.size
    try:
        meta = json.loads(body[off : off + h["meta_len"]].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable metadata: {exc}") from exc
    off += h["meta_len"]
    arrays = {}
    for name, shape in _array_shapes(h["dim"], h["K"], h["J"], h["flags"]):
        n = int(np.prod(shape)) * 8
        if off + n > len(body):
            raise FormatError(f"truncated array {name}")
        flat = np.frombuffer(body, dtype="<f8", count=n // 8, offset=off)
        arrays[name] = flat.reshape(shape).astype(np.float64)
        off += n
    if off != len(body):
        raise FormatError(f"{len(body) - off} trailing bytes before checksum")

    config = UnitConfig.from_dict(meta["config"])
    if (config.input_dim, config.expanded_dim, config.J) != (h["input_dim"], h["dim"], h["J"]):
        raise FormatError("header dimensions disagree with the stored configuration")
    unit = IncSFAUnit(config)
    if h["K"] != unit.k:
        unit.pcs.truncate(h["K"])
    unit.t = meta["t"]
    unit.n_deriv = meta["n_deriv"]
    unit.n_episodes = meta["n_episodes"]
    if h["flags"] & FLAG_MEAN:
        unit.moments.mean = arrays["mean"]
        unit.moments.variance = arrays["variance"]
    unit.moments.count = meta["moments_count"]
    unit.pcs.vectors = arrays["pcs"]
    unit.pcs.n_init = meta["pcs_n_init"]
    unit.pcs.t = meta["pcs_t"]
    unit.gamma_est.v1 = arrays["gamma_v1"]
    unit.gamma_est.initialized = meta["gamma_initialized"]
    unit.gamma_est.t = meta["gamma_t"]
    unit.sfs.w = arrays["w"]
    unit.sfs.n_init = meta["sfs_n_init"]
    unit.sfs.t = meta["sfs_t"]
    unit.dz_sq = arrays["dz_sq"]
    unit.dy_sq = arrays["dy_sq"]
    unit.eta_ref = meta["eta_ref"]
    unit.s_ref = meta["s_ref"]
    unit.prev_total = meta["prev_total"]
    if h["flags"] & FLAG_PREV:
        unit.prev_z = arrays["prev_z"]
        unit.prev_x = arrays["prev_x"]
    unit.rng.bit_generator.state = meta["rng"]
    unit.provenance = meta.get("provenance", {})
    return unit


def save(unit: IncSFAUnit, path) -> None:
    write_bytes_atomic(path, dumps(unit))


def load(path) -> IncSFAUnit:
    with open(path, "rb") as fh:
        return loads(fh.read())
