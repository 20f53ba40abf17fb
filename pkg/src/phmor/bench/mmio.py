"""MatrixMarket reading and writing for pH model matrices.

A model on disk is one ``.mtx`` file per matrix plus ``manifest.json``
mapping roles to file names. Standard models use the roles ``J, D, H, B``;
descriptor models use ``E, Q, J, D, B``. An optional ``x0`` (or ``x0_tilde``
for descriptor models) is an ``N x 1`` array file.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..errors import DenseLimitExceeded, ParseError
from ..phcore import DescriptorPHSystem, PHSystem, descriptor_to_standard

__all__ = [
    "DENSE_LIMIT",
    "dense_limit",
    "read_matrix_market",
    "write_matrix_market",
    "load_matrices",
    "write_matrices",
]

DENSE_LIMIT = 4096
MANIFEST = "manifest.json"
STANDARD_ROLES = ("J", "D", "H", "B")
DESCRIPTOR_ROLES = ("E", "Q", "J", "D", "B")
_FIELDS = ("real", "integer", "double")
_SYMMETRIES = ("general", "symmetric", "skew-symmetric")


def dense_limit() -> int:
    """Dense-conversion limit, overridable by ``PHMOR_DENSE_LIMIT``."""
    raw = os.environ.get("PHMOR_DENSE_LIMIT")
    if raw is None:
        return DENSE_LIMIT
    try:
        val = int(raw)
    except ValueError:
        raise ValueError(f"PHMOR_DENSE_LIMIT must be an integer, got {raw!r}") from None
    if val < 1:
        raise ValueError("PHMOR_DENSE_LIMIT must be positive")
    return val


def _data_lines(fh, start):
    """Yield ``(line_number, tokens)`` for non-comment, non-blank lines."""
    for no, line in enumerate(fh, start=start):
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        yield no, s.split()


def _number(tok, no, path, integer):
    try:
        return float(int(tok)) if integer else float(tok)
    except ValueError:
        raise ParseError(no, f"bad numeric value {tok!r}", path) from None


def read_matrix_market(path, limit: int | None = None) -> np.ndarray:
    """Parse a real or integer MatrixMarket file into a dense array.

    Supports ``coordinate`` and ``array`` formats with ``general``,
    ``symmetric`` or ``skew-symmetric`` storage.

    Raises
    ------
    ParseError
        On a malformed header, size line or entry; ``line`` is 1-based.
    DenseLimitExceeded
        If either dimension exceeds ``limit`` (default :func:`dense_limit`).
    """
    path = str(path)
    limit = dense_limit() if limit is None else limit
    with open(path, "r") as fh:
        header = fh.readline()
        tok = header.strip().split()
        if len(tok) != 5 or tok[0].lower() != "%%matrixmarket" or tok[1].lower() != "matrix":
            raise ParseError(1, "expected '%%MatrixMarket matrix <format> <field> <symmetry>'", path)
        fmt, fld, sym = (t.lower() for t in tok[2:])
        if fmt not in ("coordinate", "array"):
            raise ParseError(1, f"unsupported format {fmt!r}", path)
        if fld not in _FIELDS:
            raise ParseError(1, f"unsupported field {fld!r}", path)
        if sym not in _SYMMETRIES:
            raise ParseError(1, f"unsupported symmetry {sym!r}", path)
        integer = fld == "integer"
        lines = _data_lines(fh, start=2)
        try:
            no, size = next(lines)
        except StopIteration:
            raise ParseError(2, "missing size line", path) from None
        want = 3 if fmt == "coordinate" else 2
        if len(size) != want:
            raise ParseError(no, f"size line needs {want} integers", path)
        try:
            dims = [int(s) for s in size]
        except ValueError:
            raise ParseError(no, "size line must hold integers", path) from None
        nr, nc = dims[:2]
        if nr < 0 or nc < 0 or (fmt == "coordinate" and dims[2] < 0):
            raise ParseError(no, "negative size", path)
        if sym != "general" and nr != nc:
            raise ParseError(no, f"{sym} storage requires a square matrix", path)
        if max(nr, nc) > limit:
            raise DenseLimitExceeded(f"{path}: {nr}x{nc} exceeds dense limit {limit}")
        A = np.zeros((nr, nc))
        if fmt == "coordinate":
            count = 0
            for no, t in lines:
                if len(t) != 3:
                    raise ParseError(no, "coordinate entry needs 'row col value'", path)
                try:
                    i, j = int(t[0]), int(t[1])
                except ValueError:
                    raise ParseError(no, "indices must be integers", path) from None
                if not (1 <= i <= nr and 1 <= j <= nc):
                    raise ParseError(no, f"index ({i}, {j}) out of range for {nr}x{nc}", path)
                if sym != "general" and j > i:
                    raise ParseError(no, f"{sym} storage allows only the lower triangle", path)
                if sym == "skew-symmetric" and i == j:
                    raise ParseError(no, "skew-symmetric storage has no diagonal entries", path)
                v = _number(t[2], no, path, integer)
                A[i - 1, j - 1] += v
                if i != j and sym == "symmetric":
                    A[j - 1, i - 1] += v
                elif i != j and sym == "skew-symmetric":
                    A[j - 1, i - 1] -= v
                count += 1
            if count != dims[2]:
                raise ParseError(no if count else 2, f"expected {dims[2]} entries, found {count}", path)
        else:
            # column-major; symmetric variants store the lower triangle only
            if sym == "general":
                slots = [(i, j) for j in range(nc) for i in range(nr)]
            elif sym == "symmetric":
                slots = [(i, j) for j in range(nc) for i in range(j, nr)]
            else:
                slots = [(i, j) for j in range(nc) for i in range(j + 1, nr)]
            k = 0
            for no, t in lines:
                if len(t) != 1:
                    raise ParseError(no, "array entry needs exactly one value", path)
                if k >= len(slots):
                    raise ParseError(no, f"more than {len(slots)} values", path)
                i, j = slots[k]
                v = _number(t[0], no, path, integer)
                A[i, j] = v
                if i != j and sym == "symmetric":
                    A[j, i] = v
                elif sym == "skew-symmetric":
                    A[j, i] = -v
                k += 1
            if k != len(slots):
                raise ParseError(no if k else 2, f"expected {len(slots)} values, found {k}", path)
    if not np.all(np.isfinite(A)):
        raise ParseError(0, "non-finite values", path)
    return A


def write_matrix_market(path, A, symmetry: str = "general", fmt: str = "coordinate") -> None:
    """Write a dense array; values use ``%.17g`` so they round-trip exactly."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if symmetry not in _SYMMETRIES:
        raise ValueError(f"unknown symmetry {symmetry!r}")
    nr, nc = A.shape
    if symmetry == "general":
        pos = [(i, j) for j in range(nc) for i in range(nr)]
    elif symmetry == "symmetric":
        pos = [(i, j) for j in range(nc) for i in range(j, nr)]
    else:
        pos = [(i, j) for j in range(nc) for i in range(j + 1, nr)]
    out = [f"%%MatrixMarket matrix {fmt} real {symmetry}"]
    if fmt == "coordinate":
        nz = [(i, j) for i, j in pos if A[i, j] != 0.0]
        out.append(f"{nr} {nc} {len(nz)}")
        out.extend(f"{i + 1} {j + 1} {A[i, j]:.17g}" for i, j in nz)
    elif fmt == "array":
        out.append(f"{nr} {nc}")
        out.extend(f"{A[i, j]:.17g}" for i, j in pos)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    Path(path).write_text("\n".join(out) + "\n")


def _symmetry_of(A) -> str:
    if A.shape[0] == A.shape[1] and A.shape[0] > 1:
        if np.array_equal(A, A.T):
            return "symmetric"
        if np.array_equal(A, -A.T):
            return "skew-symmetric"
    return "general"


def write_matrices(sys: PHSystem, directory, name: str = "model") -> Path:
    """Write ``J, D, H, B, x0`` and a role manifest; returns the manifest path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    roles = {}
    for role in STANDARD_ROLES:
        A = getattr(sys, role)
        fname = f"{role}.mtx"
        write_matrix_market(d / fname, A, _symmetry_of(A))
        roles[role] = fname
    if np.any(sys.x0 != 0):
        write_matrix_market(d / "x0.mtx", sys.x0.reshape(-1, 1), fmt="array")
        roles["x0"] = "x0.mtx"
    manifest = {"name": name, "form": "standard", "N": sys.N, "m": sys.m, "roles": roles}
    path = d / MANIFEST
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _resolve(paths):
    """Turn a directory, manifest file or role mapping into ``{role: Path}``."""
    if isinstance(paths, dict):
        return {k: Path(v) for k, v in paths.items()}
    p = Path(paths)
    if p.is_dir():
        p = p / MANIFEST
    try:
        manifest = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.lineno, f"invalid manifest JSON: {exc.msg}", str(p)) from None
    if not isinstance(manifest, dict) or not isinstance(manifest.get("roles"), dict):
        raise ParseError(0, "manifest needs a 'roles' object", str(p))
    return {k: p.parent / v for k, v in manifest["roles"].items()}


def load_matrices(paths, limit: int | None = None, validate: bool = True,
                  x0_convention: str = "transform") -> PHSystem:
    """Load a pH model from MatrixMarket files.

    Parameters
    ----------
    paths : str, Path or dict
        Model directory, manifest path, or ``{role: file}`` mapping.
    limit : int, optional
        Dense-conversion limit; defaults to :func:`dense_limit`.
    validate : bool
        Raise on structural violations.
    x0_convention : str
        Initial-state convention passed to
        :func:`~phmor.phcore.descriptor_to_standard` for descriptor models.

    Returns
    -------
    PHSystem
        Descriptor models (roles ``E`` and ``Q``) are converted.
    """
    files = _resolve(paths)
    mats = {role: read_matrix_market(f, limit) for role, f in files.items()}
    descriptor = "E" in mats or "Q" in mats
    need = DESCRIPTOR_ROLES if descriptor else STANDARD_ROLES
    missing = [r for r in need if r not in mats]
    if missing:
        raise ParseError(0, f"missing roles {missing}", None)
    x0 = mats.get("x0_tilde" if descriptor else "x0", mats.get("x0"))
    if x0 is not None:
        x0 = x0.ravel()
    if descriptor:
        dsys = DescriptorPHSystem(mats["E"], mats["Q"], mats["J"], mats["D"], mats["B"], x0)
        return descriptor_to_standard(dsys, x0_convention, validate=validate)
    return PHSystem(mats["J"], mats["D"], mats["H"], mats["B"], x0, validate=validate)
