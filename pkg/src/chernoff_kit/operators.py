"""Linear operators on state vectors and trusted semigroup references.

Operator kinds: dense matrices, diagonal multipliers, spectral multipliers
acting in FFT space, periodic grid stencils, sums and compositions.  All
operators are immutable; ``expm_reference`` provides exp(tZ)x either by
scipy's scaling-and-squaring Pade expm (dense) or by exact multiplier
exponentials (diagonal/spectral).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .lcs_core import StateVector, DimensionMismatchError, require_same_space


class SingularResolventError(ValueError):
    pass


@dataclass(frozen=True)
class LinOp:
    """Linear operator on coordinate vectors.

    Exactly one payload field is set according to ``kind``:
      dense               -- ``matrix`` (dim x dim)
      diagonal            -- ``diag`` (length dim)
      spectral_multiplier -- ``symbol`` (length dim, acts in FFT space)
      grid_stencil        -- ``stencil`` mapping offset -> coefficient,
                             applied periodically
      sum                 -- ``terms``
      composition         -- ``factors``, applied right-to-left
    """

    kind: str
    dim: int
    matrix: Optional[np.ndarray] = None
    diag: Optional[np.ndarray] = None
    symbol: Optional[np.ndarray] = None
    stencil: Optional[tuple] = None  # tuple of (offset, coeff)
    terms: Optional[tuple] = None
    factors: Optional[tuple] = None

    def __post_init__(self):
        if self.kind == "composition":
            dims = [f.dim for f in self.factors]
            if any(d != self.dim for d in dims):
                raise DimensionMismatchError("composition dim chain inconsistent")
        if self.kind == "sum" and any(t.dim != self.dim for t in self.terms):
            raise DimensionMismatchError("sum terms have mismatched dims")

    def __call__(self, arr: np.ndarray) -> np.ndarray:
        return apply_array(self, arr)


def dense(matrix) -> LinOp:
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("dense operator needs a square matrix")
    return LinOp(kind="dense", dim=m.shape[0], matrix=m)


def diagonal(diag) -> LinOp:
    d = np.atleast_1d(np.asarray(diag))
    return LinOp(kind="diagonal", dim=d.shape[0], diag=d)


def spectral_multiplier(symbol) -> LinOp:
    s = np.atleast_1d(np.asarray(symbol))
    return LinOp(kind="spectral_multiplier", dim=s.shape[0], symbol=s)


def grid_stencil(coeffs: dict, dim: int) -> LinOp:
    return LinOp(kind="grid_stencil", dim=dim, stencil=tuple(sorted(coeffs.items())))


def linop_sum(*ops: LinOp) -> LinOp:
    if len(ops) == 1:
        return ops[0]
    if all(o.kind == "diagonal" for o in ops):
        return diagonal(sum(o.diag for o in ops))
    if all(o.kind == "spectral_multiplier" for o in ops):
        return spectral_multiplier(sum(o.symbol for o in ops))
    return LinOp(kind="sum", dim=ops[0].dim, terms=tuple(ops))


def composition(*factors: LinOp) -> LinOp:
    return LinOp(kind="composition", dim=factors[0].dim, factors=tuple(factors))


def identity(dim: int) -> LinOp:
    return diagonal(np.ones(dim))


def zero(dim: int) -> LinOp:
    return diagonal(np.zeros(dim))


def load_dense_operator(path) -> LinOp:
    """Read a dense operator from a plain-text matrix file.

    First line: "rows cols"; remaining lines hold the row-major entries,
    whitespace separated.  Entries may be real or python-style complex.
    """
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: first line must be 'rows cols'")
        rows, cols = int(header[0]), int(header[1])
        tokens = fh.read().split()
    if len(tokens) != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} entries, got {len(tokens)}")

    def parse(tok):
        try:
            return float(tok)
        except ValueError:
            return complex(tok)

    vals = np.array([parse(t) for t in tokens])
    return dense(vals.reshape(rows, cols))


def apply_array(L: LinOp, arr: np.ndarray) -> np.ndarray:
    """Apply L to a raw coordinate array."""
    if arr.shape[0] != L.dim:
        raise DimensionMismatchError(
            f"operator dim {L.dim} vs vector dim {arr.shape[0]}"
        )
    if L.kind == "dense":
        return L.matrix @ arr
    if L.kind == "diagonal":
        return L.diag * arr
    if L.kind == "spectral_multiplier":
        return np.fft.ifft(L.symbol * np.fft.fft(arr, norm="ortho"), norm="ortho")
    if L.kind == "grid_stencil":
        out = np.zeros_like(arr, dtype=np.result_type(arr, *(c for _, c in L.stencil)))
        for off, c in L.stencil:
            out += c * np.roll(arr, -off)
        return out
    if L.kind == "sum":
        return sum(apply_array(t, arr) for t in L.terms)
    if L.kind == "composition":
        for f in reversed(L.factors):
            arr = apply_array(f, arr)
        return arr
    raise ValueError(f"unknown operator kind {L.kind!r}")


def apply(L: LinOp, x: StateVector) -> StateVector:
    """Return Lx."""
    require_same_space(x, L.dim, "apply")
    return StateVector(apply_array(L, x.coords), x.space_id)


def adjoint(L: LinOp) -> LinOp:
    """Adjoint with respect to the standard l2 pairing on coordinates."""
    if L.kind == "dense":
        return dense(L.matrix.conj().T)
    if L.kind == "diagonal":
        return diagonal(L.diag.conj())
    if L.kind == "spectral_multiplier":
        return spectral_multiplier(L.symbol.conj())
    if L.kind == "grid_stencil":
        return grid_stencil({-o: np.conj(c) for o, c in L.stencil}, L.dim)
    if L.kind == "sum":
        return linop_sum(*(adjoint(t) for t in L.terms))
    if L.kind == "composition":
        return composition(*(adjoint(f) for f in reversed(L.factors)))
    raise ValueError(f"unknown operator kind {L.kind!r}")


def as_matrix(L: LinOp) -> np.ndarray:
    """Materialize L as a dense matrix (desk scale only)."""
    if L.kind == "dense":
        return L.matrix
    if L.kind == "diagonal":
        return np.diag(L.diag)
    cols = []
    eye = np.eye(L.dim, dtype=complex)
    for j in range(L.dim):
        cols.append(apply_array(L, eye[:, j]))
    return np.column_stack(cols)


@dataclass
class DissipativityReport:
    dissipative: bool
    symmetric_part_max_eig: float
    worst_sampled: float
    witness: StateVector


def is_dissipative(
    L: LinOp, trials: int = 100, tol: float = 1e-12, rng=None
) -> DissipativityReport:
    """Check Re<Lx, x> <= tol ||x||^2 for random unit x and exactly via the
    largest eigenvalue of the hermitian part (L + L*)/2."""
    rng = np.random.default_rng(0) if rng is None else rng
    if L.kind == "diagonal":
        re = np.real(L.diag)
        idx = int(np.argmax(re))
        lam = float(re[idx])
        wit = np.zeros(L.dim, dtype=complex)
        wit[idx] = 1.0
    elif L.kind == "spectral_multiplier":
        re = np.real(L.symbol)
        idx = int(np.argmax(re))
        lam = float(re[idx])
        freq = np.zeros(L.dim, dtype=complex)
        freq[idx] = 1.0
        wit = np.fft.ifft(freq, norm="ortho")
    else:
        M = as_matrix(L)
        H = (M + M.conj().T) / 2.0
        eigvals, eigvecs = np.linalg.eigh(H)
        lam = float(eigvals[-1])
        wit = eigvecs[:, -1]
    worst = -np.inf
    for _ in range(trials):
        v = rng.standard_normal(L.dim) + 1j * rng.standard_normal(L.dim)
        v /= np.linalg.norm(v)
        q = float(np.real(np.vdot(v, apply_array(L, v))))
        worst = max(worst, q)
    ok = lam <= tol and worst <= tol
    return DissipativityReport(
        dissipative=bool(ok),
        symmetric_part_max_eig=lam,
        worst_sampled=worst,
        witness=StateVector(wit),
    )


@dataclass
class SemigroupEvaluator:
    """Evaluator for T(t) = exp(t * generator).

    dense_expm materializes the generator once and calls scipy expm per
    time value (cached); spectral/diagonal generators use the exact
    multiplier exponential; closed_form delegates to a user callable
    (t, coords) -> coords.
    """

    generator: LinOp
    method: str = "auto"
    closed_form_fn: Optional[Callable] = None
    _matrix: Optional[np.ndarray] = field(default=None, repr=False)
    _expm_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.method == "auto":
            if self.closed_form_fn is not None:
                self.method = "closed_form"
            elif self.generator.kind in ("diagonal", "spectral_multiplier"):
                self.method = "spectral"
            else:
                self.method = "dense_expm"
        if self.method == "dense_expm":
            self._matrix = as_matrix(self.generator)

    @property
    def dim(self) -> int:
        return self.generator.dim

    def apply_array(self, t: float, arr: np.ndarray) -> np.ndarray:
        if t < 0:
            raise ValueError("semigroups are one-sided: t must be >= 0")
        if self.method == "closed_form":
            return self.closed_form_fn(t, arr)
        if self.method == "spectral":
            g = self.generator
            if g.kind == "diagonal":
                return np.exp(t * g.diag) * arr
            return np.fft.ifft(
                np.exp(t * g.symbol) * np.fft.fft(arr, norm="ortho"), norm="ortho"
            )
        key = float(t)
        if key not in self._expm_cache:
            self._expm_cache[key] = scipy.linalg.expm(t * self._matrix)
        return self._expm_cache[key] @ arr


def semigroup(Z: LinOp, method: str = "auto", closed_form=None) -> SemigroupEvaluator:
    return SemigroupEvaluator(generator=Z, method=method, closed_form_fn=closed_form)


def expm_reference(S: SemigroupEvaluator, t: float, x: StateVector) -> StateVector:
    """Return exp(t Z)x by the evaluator's declared method."""
    require_same_space(x, S.dim, "expm_reference")
    return StateVector(S.apply_array(t, x.coords), x.space_id)


def resolvent_apply_array(L: LinOp, s: float, arr: np.ndarray) -> np.ndarray:
    if s < 0:
        raise ValueError("s must be >= 0")
    if s == 0:
        return arr.copy()
    if L.kind in ("diagonal", "spectral_multiplier"):
        mult = L.diag if L.kind == "diagonal" else L.symbol
        denom = 1.0 - s * mult
        if np.any(np.abs(denom) < 1e-14):
            raise SingularResolventError(f"I - s*L singular at s={s}")
        if L.kind == "diagonal":
            # componentwise division when the denominator is real keeps the
            # scalar closed forms exact to a few ulps (complex division
            # rounds noticeably worse)
            if np.isrealobj(denom) or not np.any(denom.imag):
                dr = denom.real
                if np.iscomplexobj(arr):
                    y = arr.real / dr + 1j * (arr.imag / dr)
                else:
                    y = arr / dr
            else:
                y = arr / denom
        else:
            y = np.fft.ifft(np.fft.fft(arr, norm="ortho") / denom, norm="ortho")
    else:
        M = as_matrix(L)
        A = np.eye(L.dim) - s * M
        try:
            y = np.linalg.solve(A, arr)
        except np.linalg.LinAlgError as exc:
            raise SingularResolventError(f"I - s*L singular at s={s}") from exc
    resid = np.linalg.norm((y - s * apply_array(L, y)) - arr)
    if resid > 1e-10 * max(1.0, np.linalg.norm(arr)):
        raise SingularResolventError(
            f"resolvent residual {resid:.3e} too large at s={s}"
        )
    return y


def resolvent_apply(L: LinOp, s: float, x: StateVector) -> StateVector:
    """Solve (I - sL)y = x with a mandatory residual check."""
    require_same_space(x, L.dim, "resolvent_apply")
    return StateVector(resolvent_apply_array(L, s, x.coords), x.space_id)


def operator_norm(L: LinOp) -> float:
    """Exact 2-norm via dense materialization (desk scale)."""
    if L.kind == "diagonal":
        return float(np.max(np.abs(L.diag)))
    if L.kind == "spectral_multiplier":
        return float(np.max(np.abs(L.symbol)))
    return float(np.linalg.norm(as_matrix(L), 2))
