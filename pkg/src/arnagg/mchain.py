"""Markov chain core: matrix types, norms, transient stepping, and I/O.

Everything follows the row-vector convention: a distribution is a row
vector ``p`` and one step of the chain is ``p @ P``.  Transition matrices
are row stochastic, generator matrices have zero row sums.  Both wrappers
carry either a dense ``numpy.ndarray`` or a CSR ``scipy.sparse`` matrix
and validate their defining invariants on construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (
    DimensionMismatch,
    GammaTooSmall,
    GeneratorRowSumViolation,
    InputError,
    NegativeEntry,
    ParseError,
    RowSumViolation,
    ShapeError,
)

STOCHASTIC_TOL = 1e-12
GENERATOR_TOL = 1e-10

# Full round-trip precision for float64 text serialization.
FLOAT_FORMAT = "%.17g"


def _is_sparse(m) -> bool:
    return sp.issparse(m)


def _unwrap(m):
    """Return the underlying array of a wrapper, or the input unchanged."""
    return m.raw if isinstance(m, (StochasticMatrix, GeneratorMatrix)) else m


def as_vector(p) -> np.ndarray:
    """Extract a 1-D float array from a Distribution or array-like."""
    if isinstance(p, Distribution):
        return p.values
    v = np.asarray(p, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {v.shape}")
    return v


class _MatrixBase:
    """Shared dense/sparse plumbing for the two validated matrix types."""

    # Make ndarray @ wrapper defer to __rmatmul__ instead of broadcasting.
    __array_ufunc__ = None

    def __init__(self, storage):
        self._m = storage
        self.n = storage.shape[0]

    @property
    def raw(self):
        """Underlying ndarray or scipy CSR matrix."""
        return self._m

    @property
    def is_sparse(self) -> bool:
        return _is_sparse(self._m)

    @property
    def shape(self):
        return self._m.shape

    def toarray(self) -> np.ndarray:
        return self._m.toarray() if self.is_sparse else np.array(self._m)

    def vec_mul(self, v: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Row-vector product ``v @ M``.

        The dense path writes into ``out`` without allocating.  The sparse
        path has to allocate the result (scipy's public API has no ``out=``)
        and copies into ``out`` when one is given, so buffer swapping still
        works uniformly for callers.
        """
        if v.shape[0] != self.n:
            raise DimensionMismatch(f"vector of length {v.shape[0]} against {self.n} states")
        if self.is_sparse:
            r = self._m.T @ v
            if out is not None:
                np.copyto(out, r)
                return out
            return r
        if out is not None:
            return np.matmul(v, self._m, out=out)
        return v @ self._m

    def mat_mul(self, a: np.ndarray) -> np.ndarray:
        """Dense product ``a @ M`` for a 2-D array of row vectors."""
        if a.shape[1] != self.n:
            raise DimensionMismatch(f"matrix with {a.shape[1]} columns against {self.n} states")
        r = a @ self._m
        return np.asarray(r)

    def __rmatmul__(self, other):
        other = np.asarray(other, dtype=float)
        if other.ndim == 1:
            return self.vec_mul(other)
        return self.mat_mul(other)

    def with_storage(self, storage: str):
        """Return the same matrix with 'dense' or 'sparse' backing."""
        if storage == "dense":
            m = self.toarray()
        elif storage == "sparse":
            m = self._m if self.is_sparse else sp.csr_array(self._m)
        else:
            raise ValueError(f"unknown storage {storage!r}")
        clone = object.__new__(type(self))
        _MatrixBase.__init__(clone, m)
        return clone

    def __repr__(self):
        kind = "sparse" if self.is_sparse else "dense"
        return f"{type(self).__name__}(n={self.n}, {kind})"


class StochasticMatrix(_MatrixBase):
    """Row-stochastic transition matrix, dense or CSR.

    Construction validates that every entry is >= -tol (entries in
    ``(-tol, 0)`` are clamped to 0 afterwards) and that every row sums to
    1 within ``tol``.
    """

    def __init__(self, m, tol: float = STOCHASTIC_TOL):
        m = _unwrap(m)
        if not _is_sparse(m):
            m = np.array(m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"transition matrix must be square, got {m.shape}")
        _validate_entries_nonnegative(m, tol)
        sums = np.asarray(m.sum(axis=1)).ravel()
        bad = np.nonzero(np.abs(sums - 1.0) > tol)[0]
        if bad.size:
            raise RowSumViolation(int(bad[0]), float(sums[bad[0]]))
        m = _clamp_small_negatives(m, tol)
        super().__init__(m)


class GeneratorMatrix(_MatrixBase):
    """CTMC rate matrix: nonnegative off-diagonal, zero row sums."""

    def __init__(self, m, tol: float = GENERATOR_TOL):
        m = _unwrap(m)
        if not _is_sparse(m):
            m = np.array(m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"generator matrix must be square, got {m.shape}")
        dense = m.toarray() if _is_sparse(m) else m
        off = dense.copy()
        np.fill_diagonal(off, 0.0)
        r, c = np.nonzero(off < -tol)
        if r.size:
            raise NegativeEntry(int(r[0]), int(c[0]), float(off[r[0], c[0]]))
        sums = dense.sum(axis=1)
        bad = np.nonzero(np.abs(sums) > tol)[0]
        if bad.size:
            raise GeneratorRowSumViolation(int(bad[0]), float(sums[bad[0]]))
        super().__init__(m)

    @property
    def max_diag_magnitude(self) -> float:
        d = self._m.diagonal() if self.is_sparse else np.diagonal(self._m)
        return float(np.max(np.abs(d))) if d.size else 0.0


def _validate_entries_nonnegative(m, tol):
    if _is_sparse(m):
        data = m.data
        if data.size and data.min() < -tol:
            coo = m.tocoo()
            k = int(np.argmin(coo.data))
            raise NegativeEntry(int(coo.row[k]), int(coo.col[k]), float(coo.data[k]))
    else:
        if m.size and m.min() < -tol:
            r, c = np.unravel_index(int(np.argmin(m)), m.shape)
            raise NegativeEntry(int(r), int(c), float(m[r, c]))


def _clamp_small_negatives(m, tol):
    if _is_sparse(m):
        m = m.tocsr().copy()
        mask = (m.data > -tol) & (m.data < 0.0)
        if mask.any():
            m.data[mask] = 0.0
            m.eliminate_zeros()
        return m
    m[(m > -tol) & (m < 0.0)] = 0.0
    return m


@dataclass(frozen=True)
class Distribution:
    """Probability mass per state, or an approximation of one.

    With ``strict=True`` the entries must be >= -1e-12 and sum to 1 within
    1e-10.  Approximated transient distributions live in the same type with
    ``strict`` off; they may carry negative entries.
    """

    values: np.ndarray
    strict: bool = True

    def __post_init__(self):
        v = np.array(np.asarray(self.values, dtype=float), copy=True)
        if v.ndim != 1:
            raise DimensionMismatch(f"distribution must be 1-D, got shape {v.shape}")
        object.__setattr__(self, "values", v)
        if self.strict:
            if v.size == 0:
                raise InputError("empty distribution")
            if v.min() < -1e-12:
                raise InputError(f"strict distribution has entry {v.min()!r} < -1e-12")
            s = float(v.sum())
            if abs(s - 1.0) > 1e-10:
                raise InputError(f"strict distribution sums to {s!r}")

    def __len__(self):
        return self.values.shape[0]

    def norm1(self) -> float:
        return float(np.abs(self.values).sum())

    @classmethod
    def point(cls, n: int, i: int) -> "Distribution":
        v = np.zeros(n)
        v[i] = 1.0
        return cls(v)

    @classmethod
    def uniform(cls, n: int) -> "Distribution":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def random(cls, n: int, seed=0) -> "Distribution":
        rng = np.random.default_rng(seed)
        v = rng.exponential(size=n)
        return cls(v / v.sum())


def validate_stochastic(m, tol: float = STOCHASTIC_TOL) -> StochasticMatrix:
    """Wrap ``m`` as a validated row-stochastic matrix."""
    return StochasticMatrix(m, tol=tol)


def validate_generator(m, tol: float = GENERATOR_TOL) -> GeneratorMatrix:
    """Wrap ``m`` as a validated generator (rate) matrix."""
    return GeneratorMatrix(m, tol=tol)


def uniformize(q: GeneratorMatrix, gamma: float | None = None) -> StochasticMatrix:
    """Turn a generator into a transition matrix via ``I + Q / gamma``.

    ``gamma`` defaults to the largest diagonal magnitude of ``Q`` (1 for the
    zero generator) and must not be smaller than that magnitude.
    """
    if not isinstance(q, GeneratorMatrix):
        q = GeneratorMatrix(q)
    required = q.max_diag_magnitude
    if gamma is None:
        gamma = required if required > 0.0 else 1.0
    elif gamma < required or gamma <= 0.0:
        raise GammaTooSmall(gamma, required)
    if q.is_sparse:
        p = (sp.eye_array(q.n, format="csr") + q.raw.tocsr() * (1.0 / gamma)).tocsr()
    else:
        p = np.eye(q.n) + q.raw / gamma
    return StochasticMatrix(p)


def transient(p_mat: StochasticMatrix, p0, k: int) -> Distribution:
    """k-step transient distribution ``p0 @ P^k``.

    Computed as k successive vector-matrix products over two reusable
    buffers, never through matrix powers.
    """
    if k < 0:
        raise InputError(f"step count must be >= 0, got {k}")
    v = as_vector(p0).copy()
    if v.shape[0] != p_mat.n:
        raise DimensionMismatch(f"p0 has length {v.shape[0]}, chain has {p_mat.n} states")
    buf = np.empty_like(v)
    for _ in range(k):
        p_mat.vec_mul(v, out=buf)
        v, buf = buf, v
    strict = p0.strict if isinstance(p0, Distribution) else True
    return Distribution(v, strict=strict)


def inf_norm(m) -> float:
    """Maximum absolute row sum norm."""
    m = _unwrap(m)
    if _is_sparse(m):
        if m.shape[0] == 0:
            return 0.0
        return float(np.max(np.asarray(abs(m).sum(axis=1)).ravel()))
    m = np.asarray(m)
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(m).sum(axis=1)))


def abs_row_sums(m) -> np.ndarray:
    """Vector of row sums of ``|M|``, i.e. ``|M| @ 1``."""
    m = _unwrap(m)
    if _is_sparse(m):
        return np.asarray(abs(m).sum(axis=1)).ravel()
    return np.abs(np.asarray(m)).sum(axis=1)


def weighted_abs_row_sums(v, m) -> float:
    """Inner product of ``|v|`` with the absolute row sums of ``M``.

    Sits between the two norms it interpolates:
    ``norm1(v @ M) <= result <= norm1(v) * inf_norm(M)``.
    """
    v = as_vector(v)
    rows = abs_row_sums(m)
    if v.shape[0] != rows.shape[0]:
        raise DimensionMismatch(f"vector of length {v.shape[0]} against {rows.shape[0]} rows")
    return float(np.abs(v) @ rows)


# ---------------------------------------------------------------------------
# Matrix and distribution I/O.
#
# Two interchange formats: Matrix Market coordinate (sparse, 1-based
# indices) and dense CSV with one matrix row per line.  Distributions are
# single-column CSV.  All floats are written with 17 significant digits so
# that load(save(M)) reproduces M bit for bit.
# ---------------------------------------------------------------------------

_MM_HEADER = "%%MatrixMarket matrix coordinate real general"


def _detect_format(path, fmt):
    if fmt is not None:
        if fmt not in ("matrixmarket", "csv"):
            raise InputError(f"unknown matrix format {fmt!r}")
        return fmt
    s = str(path).lower()
    if s.endswith(".mtx"):
        return "matrixmarket"
    if s.endswith(".csv"):
        return "csv"
    raise InputError(f"cannot infer format from {path!r}; pass format explicitly")


def save_matrix(m, path, fmt: str | None = None) -> None:
    """Write a matrix as Matrix Market coordinate or dense CSV."""
    fmt = _detect_format(path, fmt)
    m = _unwrap(m)
    if fmt == "matrixmarket":
        coo = sp.coo_array(m)
        with open(path, "w") as fh:
            fh.write(_MM_HEADER + "\n")
            fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
            for i, j, x in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i + 1} {j + 1} {FLOAT_FORMAT % x}\n")
    else:
        dense = m.toarray() if _is_sparse(m) else np.asarray(m)
        with open(path, "w") as fh:
            for row in np.atleast_2d(dense):
                fh.write(",".join(FLOAT_FORMAT % x for x in row) + "\n")


def _parse_matrixmarket(path):
    with open(path) as fh:
        lines = fh.readlines()
    if not lines:
        raise ParseError(1, "empty file")
    header = lines[0].strip().split()
    want = _MM_HEADER.split()
    if len(header) != len(want) or header[0] != want[0] or [h.lower() for h in header[1:]] != want[1:]:
        raise ParseError(1, f"unsupported or malformed header {lines[0].strip()!r}")
    lineno = 1
    dims = None
    rows, cols, vals = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        text = line.strip()
        if not text or text.startswith("%"):
            continue
        parts = text.split()
        if dims is None:
            if len(parts) != 3:
                raise ParseError(lineno, "size line must be 'rows cols nnz'")
            try:
                dims = tuple(int(p) for p in parts)
            except ValueError:
                raise ParseError(lineno, f"non-integer size line {text!r}") from None
            if min(dims) < 0:
                raise ParseError(lineno, f"negative size {text!r}")
            continue
        if len(parts) != 3:
            raise ParseError(lineno, "entry line must be 'row col value'")
        try:
            i, j = int(parts[0]), int(parts[1])
            x = float(parts[2])
        except ValueError:
            raise ParseError(lineno, f"malformed entry {text!r}") from None
        if not (1 <= i <= dims[0]) or not (1 <= j <= dims[1]):
            raise ShapeError(
                f"entry ({i}, {j}) outside declared {dims[0]}x{dims[1]} shape (line {lineno})"
            )
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(x)
    if dims is None:
        raise ParseError(lineno, "missing size line")
    if len(vals) != dims[2]:
        raise ShapeError(f"header declares {dims[2]} entries, file has {len(vals)}")
    return sp.coo_array((vals, (rows, cols)), shape=(dims[0], dims[1])).tocsr()


def _parse_csv_matrix(path):
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            parts = text.split(",")
            try:
                row = [float(p) for p in parts]
            except ValueError:
                raise ParseError(lineno, f"malformed value in {text!r}") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ShapeError(f"row {lineno} has {len(row)} columns, expected {width}")
            rows.append(row)
    if not rows:
        raise ParseError(1, "empty file")
    return np.array(rows)


def load_matrix(path, fmt: str | None = None, kind: str = "stochastic", tol: float | None = None):
    """Load a matrix and validate it as the requested kind.

    kind is one of 'stochastic', 'generator', or 'raw' (no validation,
    returns the bare ndarray or CSR matrix).
    """
    fmt = _detect_format(path, fmt)
    m = _parse_matrixmarket(path) if fmt == "matrixmarket" else _parse_csv_matrix(path)
    if kind == "raw":
        return m
    if kind == "stochastic":
        return StochasticMatrix(m, tol=STOCHASTIC_TOL if tol is None else tol)
    if kind == "generator":
        return GeneratorMatrix(m, tol=GENERATOR_TOL if tol is None else tol)
    raise InputError(f"unknown matrix kind {kind!r}")


def save_distribution(d, path) -> None:
    """Write a distribution as single-column CSV."""
    v = as_vector(d)
    with open(path, "w") as fh:
        for x in v:
            fh.write(FLOAT_FORMAT % x + "\n")


def load_distribution(path, strict: bool = True) -> Distribution:
    """Read a single-column CSV distribution."""
    vals = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                vals.append(float(text))
            except ValueError:
                raise ParseError(lineno, f"malformed value {text!r}") from None
    if not vals:
        raise ParseError(1, "empty file")
    return Distribution(np.array(vals), strict=strict)
