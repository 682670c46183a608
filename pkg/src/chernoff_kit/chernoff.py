"""Chernoff functions and the product-formula machinery.

A Chernoff function is a time-parameterized operator map F with F(0) = I.
Iterated products F(t/n)^n are compared against trusted semigroup
references; the module also provides effective-derivative probes,
small-step consistency diagnostics, stability (M, a) estimation and the
Lie-Trotter constructor F(s) = exp(sA) exp(sB).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .lcs_core import (
    StateVector,
    SeminormFamily,
    LatticeSpec,
    require_same_space,
)
from . import operators as ops
from .operators import LinOp, SemigroupEvaluator


class NonFiniteStateError(RuntimeError):
    """Raised when a product sweep produces NaN/inf; carries the step index."""

    def __init__(self, step_index: int):
        super().__init__(f"non-finite state after product step {step_index}")
        self.step_index = step_index


@dataclass(frozen=True)
class ChernoffFn:
    """Time-parameterized operator map with F(0) = I.

    ``eval`` maps (s, coords) -> coords and must be the identity at s = 0.
    ``eval_adjoint``, when present, applies F(s)* and enables proper
    operator-norm power iteration; ``claimed_derivative`` is the operator
    the products are expected to exponentiate; ``stability`` is an optional
    declared bound ||F(step)^m|| <= M exp(a*m*step).
    """

    eval: Callable[[float, np.ndarray], np.ndarray]
    dim: int
    claimed_derivative: Optional[LinOp] = None
    stability: Optional[tuple] = None
    label: str = "chernoff"
    eval_adjoint: Optional[Callable[[float, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.stability is not None:
            M, a = self.stability
            if M < 1:
                raise ValueError("stability constant M must be >= 1")


def identity_chernoff(dim: int) -> ChernoffFn:
    return ChernoffFn(
        eval=lambda s, a: a.copy(),
        dim=dim,
        claimed_derivative=ops.zero(dim),
        stability=(1.0, 0.0),
        label="identity",
        eval_adjoint=lambda s, a: a.copy(),
    )


def semigroup_chernoff(S: SemigroupEvaluator, label: str = "exact") -> ChernoffFn:
    """Wrap an exact semigroup evaluator as a Chernoff function."""
    Sadj = ops.semigroup(ops.adjoint(S.generator)) if S.method != "closed_form" else None
    return ChernoffFn(
        eval=lambda s, a: S.apply_array(s, a),
        dim=S.dim,
        claimed_derivative=S.generator,
        label=label,
        eval_adjoint=(lambda s, a: Sadj.apply_array(s, a)) if Sadj else None,
    )


def implicit_euler(Z: LinOp) -> ChernoffFn:
    """Resolvent Chernoff function F(s) = (I - sZ)^{-1}.

    Its derivative at 0 is Z and it is a contraction whenever Z is
    dissipative, in which case stability (1, 0) is declared.
    """
    Zadj = ops.adjoint(Z)
    lu_cache: dict = {}

    def solve(op: LinOp, key: str, s: float, arr: np.ndarray) -> np.ndarray:
        if s == 0:
            return arr.copy()
        if op.kind in ("diagonal", "spectral_multiplier"):
            return ops.resolvent_apply_array(op, s, arr)
        ck = (key, float(s))
        if ck not in lu_cache:
            A = np.eye(op.dim) - s * ops.as_matrix(op)
            lu_cache[ck] = scipy.linalg.lu_factor(A)
        y = scipy.linalg.lu_solve(lu_cache[ck], arr)
        resid = np.linalg.norm((y - s * ops.apply_array(op, y)) - arr)
        if resid > 1e-10 * max(1.0, np.linalg.norm(arr)):
            raise ops.SingularResolventError(
                f"resolvent residual {resid:.3e} too large at s={s}"
            )
        return y

    stability = (1.0, 0.0) if ops.is_dissipative(Z).dissipative else None
    return ChernoffFn(
        eval=lambda s, a: solve(Z, "Z", s, a),
        dim=Z.dim,
        claimed_derivative=Z,
        stability=stability,
        label="implicit_euler",
        eval_adjoint=lambda s, a: solve(Zadj, "Zadj", s, a),
    )


def lie_trotter(
    A_semigroup: SemigroupEvaluator, B_semigroup: SemigroupEvaluator
) -> ChernoffFn:
    """Lie product F(s) = exp(sA) exp(sB) with claimed derivative A + B."""
    if A_semigroup.dim != B_semigroup.dim:
        raise ops.DimensionMismatchError("Lie factors have mismatched dims")
    Aadj = ops.semigroup(ops.adjoint(A_semigroup.generator))
    Badj = ops.semigroup(ops.adjoint(B_semigroup.generator))
    stability = None
    # (M1 M2)^m has no clean (M, a) form unless both factors are
    # exponentially bounded with M = 1.
    if (
        A_semigroup.generator is not None
        and B_semigroup.generator is not None
    ):
        a_rep = ops.is_dissipative(A_semigroup.generator)
        b_rep = ops.is_dissipative(B_semigroup.generator)
        a_growth = max(a_rep.symmetric_part_max_eig, 0.0)
        b_growth = max(b_rep.symmetric_part_max_eig, 0.0)
        stability = (1.0, a_growth + b_growth)
    return ChernoffFn(
        eval=lambda s, a: A_semigroup.apply_array(s, B_semigroup.apply_array(s, a)),
        dim=A_semigroup.dim,
        claimed_derivative=ops.linop_sum(
            A_semigroup.generator, B_semigroup.generator
        ),
        stability=stability,
        label="lie_trotter",
        eval_adjoint=lambda s, a: Badj.apply_array(s, Aadj.apply_array(s, a)),
    )


def product_apply(F: ChernoffFn, t: float, n: int, h: StateVector) -> StateVector:
    """Apply F(t/n) n times to h."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if n < 1:
        raise ValueError("n must be >= 1")
    require_same_space(h, F.dim, "product_apply")
    s = t / n
    x = h.coords
    for i in range(n):
        x = F.eval(s, x)
        if not np.all(np.isfinite(x)):
            raise NonFiniteStateError(i + 1)
    return StateVector(x, h.space_id)


def product_path(
    F: ChernoffFn, t: float, n: int, s_grid: Sequence[float], h: StateVector
) -> list:
    """F(t/n)^[s*n/t] h for each s in s_grid, sharing one power sweep."""
    if n < 1:
        raise ValueError("n must be >= 1")
    require_same_space(h, F.dim, "product_path")
    powers = [0 if t == 0 else int(np.floor(s * n / t + 1e-12)) for s in s_grid]
    if any(p < 0 or p > n for p in powers):
        raise ValueError("s_grid points must lie in [0, t]")
    step = t / n
    needed = sorted(set(powers))
    snapshots = {}
    x = h.coords
    if 0 in needed:
        snapshots[0] = x.copy()
    top = max(needed) if needed else 0
    for i in range(1, top + 1):
        x = F.eval(step, x)
        if not np.all(np.isfinite(x)):
            raise NonFiniteStateError(i)
        if i in needed:
            snapshots[i] = x.copy()
    return [StateVector(snapshots[p], h.space_id) for p in powers]


def derivative_path(
    F: ChernoffFn,
    Z: LinOp,
    t: float,
    n: int,
    s_grid: Sequence[float],
    h: StateVector,
) -> list:
    """Product path applied to Zh: tracks the derivative of the trajectory."""
    zh = ops.apply(Z, h)
    return product_path(F, t, n, s_grid, zh)


@dataclass
class ApproximatingFamily:
    """Family f_s -> f certifying g as the effective derivative value at f."""

    build: Callable[[float], StateVector]
    target: StateVector
    claimed_limit: StateVector

    @classmethod
    def constant(cls, f: StateVector, g: StateVector) -> "ApproximatingFamily":
        """The common case f_s = f with claimed limit g = Zf."""
        return cls(build=lambda s: f, target=f, claimed_limit=g)


@dataclass
class ProbeResult:
    verdict: bool
    target_errors: dict
    quotient_errors: dict
    s_grid: tuple


def effective_derivative_probe(
    F: ChernoffFn,
    fam: ApproximatingFamily,
    s_grid: Sequence[float],
    family: Optional[SeminormFamily] = None,
) -> ProbeResult:
    """Check f_s -> f and s^{-1}(F(s) - I) f_s -> g along a decreasing grid.

    Passes iff both error curves fall below 1e-6 * (1 + ||g||) at the tail
    without increasing from the first grid point.
    """
    from .lcs_core import l2_family

    family = family or l2_family()
    sg = tuple(s_grid)
    if any(s2 >= s1 for s1, s2 in zip(sg, sg[1:])):
        raise ValueError("s_grid must be strictly decreasing")
    f = fam.target.coords
    g = fam.claimed_limit.coords
    t_err = {lab: [] for lab in family.index_labels}
    q_err = {lab: [] for lab in family.index_labels}
    for s in sg:
        fs = fam.build(s).coords
        quot = (F.eval(s, fs) - fs) / s
        for lab, p in zip(family.index_labels, family.members):
            t_err[lab].append(p(fs - f))
            q_err[lab].append(p(quot - g))
    verdict = True
    for lab, p in zip(family.index_labels, family.members):
        tol = 1e-6 * (1.0 + p(g))
        for curve in (t_err[lab], q_err[lab]):
            if min(curve[-3:]) > tol or curve[-1] > curve[0] + tol:
                verdict = False
    return ProbeResult(
        verdict=verdict, target_errors=t_err, quotient_errors=q_err, s_grid=sg
    )


def small_step_consistency(
    F: ChernoffFn,
    g: StateVector,
    eps_grid: Sequence[float],
    family: Optional[SeminormFamily] = None,
) -> dict:
    """Max of ||(F^i(step) - I)g|| over samples with i*step <= eps, per eps.

    Samples fix the accumulated time tau = i*step at fractions of eps and
    vary the power i, so the reported curve decreases with eps whenever the
    products are consistent at small accumulated time.
    """
    from .lcs_core import l2_family

    family = family or l2_family()
    curves = {lab: [] for lab in family.index_labels}
    for eps in eps_grid:
        worst = {lab: 0.0 for lab in family.index_labels}
        for frac in (0.25, 0.5, 1.0):
            tau = frac * eps
            for i in (1, 2, 4, 8, 16):
                step = tau / i
                x = g.coords
                for _ in range(i):
                    x = F.eval(step, x)
                diff = x - g.coords
                for lab, p in zip(family.index_labels, family.members):
                    worst[lab] = max(worst[lab], p(diff))
        for lab in family.index_labels:
            curves[lab].append(worst[lab])
    return curves


def step_difference_consistency(
    F: ChernoffFn,
    g: StateVector,
    s: float,
    eps_grid: Sequence[float],
    family: Optional[SeminormFamily] = None,
) -> dict:
    """Max of ||(F^i - F^l)(step) g|| over samples with |i-l|*step <= eps
    and both accumulated times <= s, per eps."""
    from .lcs_core import l2_family

    family = family or l2_family()
    curves = {lab: [] for lab in family.index_labels}
    for eps in eps_grid:
        # choose k so that up to 4 extra steps stay within the eps window
        k = max(8, int(np.ceil(4.0 * s / eps)))
        step = s / k
        max_d = max(1, int(np.floor(eps / step + 1e-12)))
        bases = sorted(set(int(b) for b in (0, k // 4, k // 2, 3 * k // 4, k - max_d)))
        wanted = set()
        for b in bases:
            for d in range(0, max_d + 1):
                if b + d <= k:
                    wanted.add(b + d)
        snapshots = {}
        x = g.coords
        if 0 in wanted:
            snapshots[0] = x.copy()
        for i in range(1, max(wanted) + 1):
            x = F.eval(step, x)
            if i in wanted:
                snapshots[i] = x.copy()
        worst = {lab: 0.0 for lab in family.index_labels}
        for b in bases:
            for d in range(1, max_d + 1):
                if b + d > k:
                    continue
                diff = snapshots[b + d] - snapshots[b]
                for lab, p in zip(family.index_labels, family.members):
                    worst[lab] = max(worst[lab], p(diff))
        for lab in family.index_labels:
            curves[lab].append(worst[lab])
    return curves


@dataclass
class ConvergenceReport:
    """Per-seminorm error curves over an (n, t) grid plus fitted rates."""

    n_grid: tuple
    t_grid: tuple
    seminorm_labels: tuple
    errors: dict  # label -> array of shape (len(t_grid), len(n_grid))
    uniform_errors: dict  # label -> array over n_grid
    fitted_rate: dict  # label -> (slope, residual) or None
    stability_estimate: Optional[tuple] = None
    self_convergence: bool = False

    def csv_rows(self):
        for lab in self.seminorm_labels:
            for ti, t in enumerate(self.t_grid):
                for ni, n in enumerate(self.n_grid):
                    yield lab, float(t), int(n), float(self.errors[lab][ti, ni])


def _fit_loglog(errors: Sequence[float], ns: Sequence[int], points: int = 4):
    """Least-squares slope of log(error) vs log(1/n) over the last points.

    Returns (slope, max-abs-log-residual) or None when the tail touches
    zero/machine floor.
    """
    errs = np.asarray(errors, dtype=float)[-points:]
    nn = np.asarray(ns, dtype=float)[-points:]
    # a tail at the rounding floor carries no rate information
    if len(errs) < 2 or np.any(errs <= 1e-13):
        return None
    x = np.log(1.0 / nn)
    y = np.log(errs)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.max(np.abs(A @ coef - y)))
    return float(coef[0]), resid


def chernoff_converge(
    F: ChernoffFn,
    reference: Optional[SemigroupEvaluator],
    h: StateVector,
    t0: float,
    n_grid: Sequence[int],
    t_grid: Sequence[float],
    family: SeminormFamily,
) -> ConvergenceReport:
    """Fill a convergence report for F(t0/n)^[t n/t0] h over the grids.

    With a reference the error is against exp(tZ)h; without one the error
    at n is the difference from the previous n's path (self-convergence).
    """
    ns = tuple(int(n) for n in n_grid)
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("n_grid must be strictly increasing")
    ts = tuple(float(t) for t in t_grid)
    if any(t < 0 or t > t0 + 1e-12 for t in ts):
        raise ValueError("t_grid must lie in [0, t0]")
    labs = family.index_labels
    errors = {lab: np.zeros((len(ts), len(ns))) for lab in labs}
    ref_vals = None
    if reference is not None:
        ref_vals = [reference.apply_array(t, h.coords) for t in ts]
    prev_path = None
    for ni, n in enumerate(ns):
        path = product_path(F, t0, n, ts, h)
        for ti, t in enumerate(ts):
            if ref_vals is not None:
                diff = path[ti].coords - ref_vals[ti]
            elif prev_path is not None:
                diff = path[ti].coords - prev_path[ti].coords
            else:
                diff = np.zeros_like(path[ti].coords)
            for lab, p in zip(labs, family.members):
                errors[lab][ti, ni] = p(diff)
        prev_path = path
    uniform = {lab: errors[lab].max(axis=0) for lab in labs}
    rates = {lab: _fit_loglog(uniform[lab], ns) for lab in labs}
    return ConvergenceReport(
        n_grid=ns,
        t_grid=ts,
        seminorm_labels=labs,
        errors=errors,
        uniform_errors=uniform,
        fitted_rate=rates,
        self_convergence=reference is None,
    )


def _norm_estimate(
    F: ChernoffFn, step: float, m: int, iterations: int = 20, rng=None
) -> float:
    """Estimate ||F(step)^m|| (always a lower bound).

    With an adjoint available this is power iteration on (F^m)* (F^m);
    otherwise the best Rayleigh-style quotient over forward-only iterates.
    """
    rng = np.random.default_rng(12345) if rng is None else rng
    v = rng.standard_normal(F.dim) + 1j * rng.standard_normal(F.dim)
    v /= np.linalg.norm(v)

    def fwd(x):
        for _ in range(m):
            x = F.eval(step, x)
        return x

    if F.eval_adjoint is not None:

        def bwd(x):
            for _ in range(m):
                x = F.eval_adjoint(step, x)
            return x

        est = 0.0
        for _ in range(iterations):
            w = bwd(fwd(v))
            nw = np.linalg.norm(w)
            if nw == 0:
                return 0.0
            est = float(np.sqrt(np.real(np.vdot(v, w))))
            v = w / nw
        return est
    best = 0.0
    for _ in range(iterations):
        w = fwd(v)
        nw = np.linalg.norm(w)
        best = max(best, float(nw))
        if nw == 0:
            break
        v = w / nw
    return best


def stability_estimate(
    F: ChernoffFn, lattice: LatticeSpec, trials: int = 20, rng=None
) -> tuple:
    """Minimax fit of (M, a) to sampled operator-norm estimates.

    Chooses the smallest growth rate a for which the pure-exponential bound
    from M holds on the samples, then lifts M so that every sampled norm
    satisfies norm <= M * exp(a * m * step) exactly.  M >= 1 always (the
    identity m = 0 is a sample).
    """
    rng = np.random.default_rng(2024) if rng is None else rng
    samples = [(0.0, 0.0)]  # (tau, log norm) for the identity
    for step, cap in lattice.pairs(lattice.s_max):
        m = 1
        while m <= cap:
            nrm = _norm_estimate(F, step, m, rng=rng)
            if nrm > 0:
                samples.append((m * step, float(np.log(nrm))))
            m *= 2
    taus = np.array([t for t, _ in samples])
    logs = np.array([v for _, v in samples])
    pos = taus > 0
    if not np.any(pos):
        return 1.0, 0.0
    a_hat = float(np.max(logs[pos] / taus[pos]))
    log_m = float(np.max(logs - a_hat * taus))  # includes the tau=0 sample
    return float(np.exp(max(log_m, 0.0))), a_hat


def uniqueness_cross_check(
    F_list: Sequence[ChernoffFn],
    h: StateVector,
    t0: float,
    n_big: int,
    family: SeminormFamily,
    t_grid: Optional[Sequence[float]] = None,
) -> float:
    """Max pairwise deviation of the product paths of Chernoff functions
    sharing the same claimed derivative, evaluated at a single large n."""
    if len(F_list) < 2:
        raise ValueError("need at least two Chernoff functions")
    dims = {F.dim for F in F_list}
    if len(dims) != 1:
        raise ops.DimensionMismatchError("Chernoff functions on different spaces")
    ts = tuple(t_grid) if t_grid is not None else tuple(np.linspace(0, t0, 9))
    paths = [product_path(F, t0, n_big, ts, h) for F in F_list]
    worst = 0.0
    for i in range(len(paths)):
        for j in range(i + 1, len(paths)):
            for ti in range(len(ts)):
                diff = paths[i][ti].coords - paths[j][ti].coords
                for p in family.members:
                    worst = max(worst, p(diff))
    return worst


def regularity_check(
    F: ChernoffFn,
    Z: LinOp,
    h: StateVector,
    t0: float,
    n: int,
    t_grid: Sequence[float],
    family: SeminormFamily,
) -> dict:
    """Modulus of continuity of t -> Z f(t) along the product path.

    Returns per-seminorm moduli on the given grid and on its midpoint
    refinement; a continuously differentiable trajectory shows the refined
    modulus shrinking proportionally to the grid spacing.
    """
    ts = sorted(float(t) for t in t_grid)
    fine = sorted(set(ts) | {0.5 * (a + b) for a, b in zip(ts, ts[1:])})

    def modulus(grid):
        vals = derivative_path(F, Z, t0, n, grid, h)
        out = {}
        for lab, p in zip(family.index_labels, family.members):
            out[lab] = max(
                (p(vals[i + 1].coords - vals[i].coords) for i in range(len(grid) - 1)),
                default=0.0,
            )
        return out

    coarse = modulus(ts)
    refined = modulus(fine)
    return {
        lab: {"coarse": coarse[lab], "refined": refined[lab]}
        for lab in family.index_labels
    }
