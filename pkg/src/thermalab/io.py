"""Matrix container, JSON/TOML config loading and deterministic CSV/JSON writers."""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os
import struct
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InputError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

MAGIC = b"THLB"
FORMAT_VERSION = 1
KINDS = ("hamiltonian", "floquet", "observable", "state", "charge", "matrix")
_HEADER = struct.Struct("<4sHBxQ")
JSON_MAX_DIM = 64
_TRAILER = b"META"


def write_matrix(path, matrix, kind: str = "matrix", meta: dict | None = None) -> None:
    """Header (magic, version, kind code, dim), row-major little-endian complex128, then an
    optional metadata trailer: b"META", uint32 length, UTF-8 JSON."""
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputError(f"only square matrices can be stored, got {m.shape}")
    if kind not in KINDS:
        raise InputError(f"unknown matrix kind {kind!r}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, KINDS.index(kind), m.shape[0]))
        fh.write(np.ascontiguousarray(m, dtype="<c16").tobytes(order="C"))
        if meta is not None:
            blob = json.dumps(meta, sort_keys=True).encode()
            fh.write(_TRAILER + struct.pack("<I", len(blob)) + blob)


def read_matrix(path, with_meta: bool = False):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InputError("matrix file truncated")
    magic, ver, code, dim = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise InputError("not a thermalab matrix file")
    if ver != FORMAT_VERSION:
        raise InputError(f"unsupported container version {ver}")
    if code >= len(KINDS):
        raise InputError(f"unknown kind code {code}")
    size = 16 * dim * dim
    body, rest = raw[_HEADER.size:_HEADER.size + size], raw[_HEADER.size + size:]
    if len(body) != size:
        raise InputError(f"payload size {len(body)} does not match dim {dim}")
    meta = None
    if rest:
        if rest[:4] != _TRAILER or len(rest) < 8:
            raise InputError("unexpected bytes after matrix payload")
        (n,) = struct.unpack_from("<I", rest, 4)
        if len(rest) != 8 + n:
            raise InputError("metadata trailer truncated")
        meta = json.loads(rest[8:].decode())
    m = np.frombuffer(body, dtype="<c16").reshape(dim, dim).astype(complex)
    return (m, KINDS[code], meta) if with_meta else (m, KINDS[code])


def matrix_to_json(matrix, kind: str = "matrix") -> dict:
    m = np.asarray(matrix, dtype=complex)
    if m.shape[0] > JSON_MAX_DIM:
        raise InputError(f"JSON export is limited to D <= {JSON_MAX_DIM}")
    return {"dim": m.shape[0], "kind": kind, "real": m.real.tolist(), "imag": m.imag.tolist()}


def matrix_from_json(data: dict) -> tuple[np.ndarray, str]:
    m = np.asarray(data["real"], dtype=float) + 1j * np.asarray(data["imag"], dtype=float)
    if m.shape != (data["dim"], data["dim"]):
        raise InputError("JSON matrix shape does not match dim")
    return m, data.get("kind", "matrix")


def load_config(path) -> dict:
    p = Path(path)
    try:
        text = p.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read config {p}: {exc}") from exc
    try:
        if p.suffix.lower() == ".toml":
            return tomllib.loads(text.decode())
        return json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise InputError(f"cannot parse config {p}: {exc}") from exc


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def stamp(cfg_hash: str) -> dict:
    return {"config_hash": cfg_hash, "version": __version__}


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_text(header: list[str], rows, cfg_hash: str | None = None) -> str:
    buf = _io.StringIO()
    if cfg_hash is not None:
        buf.write(f"# config_hash={cfg_hash} version={__version__}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([_num(v) for v in r])
    return buf.getvalue()


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True, default=_plain) + "\n"


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def thread_count() -> int:
    """Worker pool size from THERMALAB_THREADS (default: up to 4 cores)."""
    raw = os.environ.get("THERMALAB_THREADS", "")
    if not raw:
        return min(4, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"THERMALAB_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise InputError("THERMALAB_THREADS must be >= 1")
    return n
