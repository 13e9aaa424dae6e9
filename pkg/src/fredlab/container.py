"""Artifact persistence: binary field container, ledgers, manifests.

Every artifact an experiment writes goes through this module so that a
run is fully described by its directory: arrays in a flat binary
container (row-major float64 with a small self-describing header), scan
series and sample ledgers as CSV, summaries as JSON, and a manifest
indexing every file with a content hash.  All writers are deterministic:
no timestamps, sorted keys, shortest round-trip float formatting.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError

__all__ = [
    "write_array",
    "read_array",
    "write_field",
    "read_field",
    "write_csv",
    "read_csv",
    "write_json",
    "read_json",
    "sha256_file",
    "write_manifest",
    "check_manifest",
    "MANIFEST_NAME",
]

_MAGIC = b"FLAB"
_VERSION = 1
_KIND_BYTES = 16
_MAX_NDIM = 4
MANIFEST_NAME = "manifest.json"


def write_array(path, values: np.ndarray, kind: str, height: float = float("nan")) -> None:
    """Write one float64 array with a small binary header.

    Layout (little endian): magic ``FLAB``, version u16, kind tag
    (16 ascii bytes, space padded), ndim u16, one u64 per dimension,
    channel height f64, then the row-major data.
    """
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim < 1 or arr.ndim > _MAX_NDIM:
        raise ConfigError(f"container stores 1..{_MAX_NDIM}-d arrays, got {arr.ndim}-d")
    tag = kind.encode("ascii")
    if len(tag) > _KIND_BYTES:
        raise ConfigError(f"kind tag {kind!r} exceeds {_KIND_BYTES} bytes")
    header = _MAGIC + struct.pack("<H", _VERSION)
    header += tag.ljust(_KIND_BYTES, b" ")
    header += struct.pack("<H", arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    header += struct.pack("<d", float(height))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def read_array(path) -> tuple[np.ndarray, dict]:
    """Read a container file back as ``(array, meta)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _MAGIC:
        raise ConfigError(f"{path}: not a field container")
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != _VERSION:
        raise ConfigError(f"{path}: unsupported container version {version}")
    kind = raw[6 : 6 + _KIND_BYTES].decode("ascii").rstrip()
    off = 6 + _KIND_BYTES
    (ndim,) = struct.unpack_from("<H", raw, off)
    off += 2
    if ndim < 1 or ndim > _MAX_NDIM:
        raise ConfigError(f"{path}: corrupt header (ndim={ndim})")
    shape = struct.unpack_from(f"<{ndim}Q", raw, off)
    off += 8 * ndim
    (height,) = struct.unpack_from("<d", raw, off)
    off += 8
    count = int(np.prod(shape))
    if len(raw) - off < 8 * count:
        raise ConfigError(f"{path}: truncated container")
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
    return data.reshape(shape).copy(), {"kind": kind, "height": height}


def write_field(path, values: np.ndarray, grid, kind: str) -> None:
    """Write grid-shaped values (batch dimensions allowed in front)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape[-2:] != (grid.nx, grid.ny):
        raise ConfigError(
            f"field shape {arr.shape} does not end in grid shape {(grid.nx, grid.ny)}"
        )
    write_array(path, arr, kind, height=grid.height)


def read_field(path) -> tuple[np.ndarray, dict]:
    values, meta = read_array(path)
    meta["nx"], meta["ny"] = int(values.shape[-2]), int(values.shape[-1])
    return values, meta


def _format_cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header: list[str], rows) -> None:
    """Deterministic CSV: shortest round-trip floats, LF endings."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_format_cell(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines:
        raise ConfigError(f"{path}: empty ledger")
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:] if line]


def jsonable(obj):
    """Recursively convert numpy containers/scalars for serialization."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def write_json(path, obj) -> None:
    text = json.dumps(jsonable(obj), indent=2, sort_keys=True, ensure_ascii=True)
    Path(path).write_text(text + "\n", encoding="ascii")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="ascii"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(root, status: str = "ok", diagnostics=None, config=None) -> dict:
    """Index every file under ``root`` (except the manifest) with its hash."""
    root = Path(root)
    artifacts = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name != MANIFEST_NAME:
            rel = p.relative_to(root).as_posix()
            artifacts[rel] = {
                "sha256": sha256_file(p),
                "bytes": p.stat().st_size,
            }
    manifest = {"artifacts": artifacts, "status": status}
    if diagnostics:
        manifest["diagnostics"] = jsonable(diagnostics)
    if config is not None:
        manifest["config"] = jsonable(config)
    write_json(root / MANIFEST_NAME, manifest)
    return manifest


def check_manifest(root) -> tuple[bool, list[str]]:
    """Re-hash every indexed artifact; report mismatches and strays."""
    root = Path(root)
    path = root / MANIFEST_NAME
    if not path.is_file():
        raise ConfigError(f"no {MANIFEST_NAME} in {root}")
    manifest = read_json(path)
    problems = []
    indexed = manifest.get("artifacts", {})
    for rel, entry in indexed.items():
        p = root / rel
        if not p.is_file():
            problems.append(f"missing artifact: {rel}")
            continue
        digest = sha256_file(p)
        if digest != entry.get("sha256"):
            problems.append(f"hash mismatch: {rel}")
        elif p.stat().st_size != entry.get("bytes"):
            problems.append(f"size mismatch: {rel}")
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name != MANIFEST_NAME:
            rel = p.relative_to(root).as_posix()
            if rel not in indexed:
                problems.append(f"unindexed file: {rel}")
    return (not problems), problems
