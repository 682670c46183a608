"""Generator families and the Trotter-Kato convergence equivalence.

A generator family maps s >= 0 to an operator Z_s; the module checks the
ingredients of the equivalence between generator convergence on a core and
locally uniform semigroup convergence: uniform equicontinuity of
{exp(l Z_s)}, core witnesses f_s -> f with Z_s f_s -> Z_0 f, the per-s
sup-error sweep, and the integral-built core elements used in the
sufficiency direction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .lcs_core import StateVector, SeminormFamily, l2_family
from . import operators as ops
from .operators import LinOp, SemigroupEvaluator


@dataclass(frozen=True)
class GeneratorFamily:
    """Map s -> Z_s on a decreasing s-grid that includes s = 0."""

    at: Callable[[float], LinOp]
    s_grid: tuple
    label: str = "generator_family"

    def __post_init__(self):
        sg = tuple(float(s) for s in self.s_grid)
        if 0.0 not in sg:
            raise ValueError("s_grid must include s = 0")
        positives = [s for s in sg if s > 0]
        if any(b >= a for a, b in zip(positives, positives[1:])):
            raise ValueError("positive s-grid entries must be strictly decreasing")
        object.__setattr__(self, "s_grid", sg)
        dims = {self.at(s).dim for s in sg}
        if len(dims) != 1:
            raise ValueError("generator dimensions differ across s_grid")

    @property
    def dim(self) -> int:
        return self.at(0.0).dim


def linear_perturbation_family(
    Z0: LinOp, W: LinOp, s_grid: Optional[Sequence[float]] = None
) -> GeneratorFamily:
    """The standard bounded-perturbation family Z_s = Z_0 + s W."""
    sg = tuple(s_grid) if s_grid is not None else default_s_grid()
    return GeneratorFamily(
        at=lambda s: Z0 if s == 0 else ops.linop_sum(Z0, _scale(W, s)),
        s_grid=sg,
        label="linear_perturbation",
    )


def _scale(L: LinOp, c: float) -> LinOp:
    if L.kind == "diagonal":
        return ops.diagonal(c * L.diag)
    if L.kind == "spectral_multiplier":
        return ops.spectral_multiplier(c * L.symbol)
    return ops.dense(c * ops.as_matrix(L))


def default_s_grid() -> tuple:
    """{1/2, 1/4, ..., 2^-10} plus 0."""
    return tuple(0.5 ** k for k in range(1, 11)) + (0.0,)


@dataclass
class CoreWitness:
    """Witness f in D(Z_0) with a family f_s in D(Z_s)."""

    f: StateVector
    family: Callable[[float], StateVector]

    @classmethod
    def constant(cls, f: StateVector) -> "CoreWitness":
        return cls(f=f, family=lambda s: f)


def _tail_decreasing(values: Sequence[float], k: int = 4, floor: float = 1e-12) -> bool:
    """True when the last k values either sit at the floor or strictly drop."""
    vals = list(values)[-k:]
    if all(v <= floor for v in vals):
        return True
    if any(b > a * (1 + 1e-9) + floor for a, b in zip(vals, vals[1:])):
        return False
    return vals[-1] < 0.95 * vals[0] or vals[-1] <= floor


def family_equicontinuity(
    fam: GeneratorFamily,
    l0: float,
    l_samples: int = 8,
    m_cap: float = 10.0,
    a_cap: float = 10.0,
) -> dict:
    """Fit a uniform bound ||exp(l Z_s)|| <= M exp(a l) over l <= l0, s in grid.

    The fit is the minimax one of :func:`chernoff.stability_estimate`; pass
    requires the constants to stay within the declared slack caps.
    """
    ls = np.linspace(0.0, l0, l_samples + 1)
    samples = [(0.0, 0.0)]
    for s in fam.s_grid:
        S = ops.semigroup(fam.at(s))
        for l in ls[1:]:
            if S.method == "spectral":
                g = S.generator
                mult = g.diag if g.kind == "diagonal" else g.symbol
                nrm = float(np.max(np.abs(np.exp(l * mult))))
            else:
                import scipy.linalg

                nrm = float(np.linalg.norm(scipy.linalg.expm(l * S._matrix), 2))
            if nrm > 0:
                samples.append((float(l), float(np.log(nrm))))
    taus = np.array([t for t, _ in samples])
    logs = np.array([v for _, v in samples])
    pos = taus > 0
    a_hat = float(np.max(logs[pos] / taus[pos])) if np.any(pos) else 0.0
    m_hat = float(np.exp(max(float(np.max(logs - a_hat * taus)), 0.0)))
    return {
        "M": m_hat,
        "a": a_hat,
        "pass": bool(np.isfinite(m_hat) and m_hat <= m_cap and a_hat <= a_cap),
    }


def core_condition_check(
    fam: GeneratorFamily,
    witnesses: Sequence[CoreWitness],
    density_basis: Sequence[StateVector],
    family: Optional[SeminormFamily] = None,
    gram_tol: float = 1e-8,
) -> dict:
    """Verify witness families converge and their targets span the basis.

    In finite dimension a core is exactly a spanning set, so the verdict is
    pass iff every witness satisfies f_s -> f, Z_s f_s -> Z_0 f (decreasing
    tails) and the span of the witness targets contains the density basis
    to the Gram-rank tolerance.
    """
    if not witnesses:
        raise ValueError("witnesses must be nonempty")
    family = family or l2_family()
    Z0 = fam.at(0.0)
    positives = [s for s in fam.s_grid if s > 0]
    witness_ok = True
    for w in witnesses:
        z0f = ops.apply(Z0, w.f).coords
        f_curve = {lab: [] for lab in family.index_labels}
        z_curve = {lab: [] for lab in family.index_labels}
        for s in positives:
            fs = w.family(s)
            zsfs = ops.apply(fam.at(s), fs).coords
            for lab, p in zip(family.index_labels, family.members):
                f_curve[lab].append(p(fs.coords - w.f.coords))
                z_curve[lab].append(p(zsfs - z0f))
        for lab in family.index_labels:
            if not _tail_decreasing(f_curve[lab]) or not _tail_decreasing(z_curve[lab]):
                witness_ok = False
    W = np.column_stack([w.f.coords for w in witnesses])
    span_ok = True
    worst_residual = 0.0
    for b in density_basis:
        coef, *_ = np.linalg.lstsq(W, b.coords, rcond=None)
        resid = float(np.linalg.norm(W @ coef - b.coords))
        scale = max(1.0, float(np.linalg.norm(b.coords)))
        worst_residual = max(worst_residual, resid / scale)
        if resid > gram_tol * scale:
            span_ok = False
    return {
        "pass": bool(witness_ok and span_ok),
        "witness_ok": witness_ok,
        "span_ok": span_ok,
        "span_residual": worst_residual,
    }


def semigroup_convergence_sweep(
    fam: GeneratorFamily,
    f: StateVector,
    t0: float,
    l_grid: Sequence[float],
    family: SeminormFamily,
) -> dict:
    """Per-s sup over l of ||exp(l Z_s)f - exp(l Z_0)f|| per seminorm.

    Passes iff every seminorm's curve decreases along the s-grid tail.
    """
    ls = [float(l) for l in l_grid]
    if any(l < 0 or l > t0 + 1e-12 for l in ls):
        raise ValueError("l_grid must lie in [0, t0]")
    S0 = ops.semigroup(fam.at(0.0))
    ref = [S0.apply_array(l, f.coords) for l in ls]
    positives = [s for s in fam.s_grid if s > 0]
    table = {lab: [] for lab in family.index_labels}
    for s in positives:
        Ss = ops.semigroup(fam.at(s))
        sup = {lab: 0.0 for lab in family.index_labels}
        for li, l in enumerate(ls):
            diff = Ss.apply_array(l, f.coords) - ref[li]
            for lab, p in zip(family.index_labels, family.members):
                sup[lab] = max(sup[lab], p(diff))
        for lab in family.index_labels:
            table[lab].append(sup[lab])
    ok = all(_tail_decreasing(table[lab]) for lab in family.index_labels)
    return {"s_grid": positives, "sup_errors": table, "pass": bool(ok)}


def core_elements_from_integrals(
    S: SemigroupEvaluator,
    f: StateVector,
    s1: float,
    s2: float,
    quadrature_n: int,
) -> tuple:
    """Composite-trapezoid approximation of the integral of T(l)f over
    [s1, s2] and the defect ||Z * integral - (T(s2)f - T(s1)f)||_2.

    The exact integral satisfies Z * integral = T(s2)f - T(s1)f, so the
    defect decays at the trapezoid rate O(quadrature_n^{-2}).
    """
    if not 0 <= s1 < s2:
        raise ValueError("need 0 <= s1 < s2")
    if quadrature_n < 2:
        raise ValueError("quadrature_n must be >= 2")
    nodes = np.linspace(s1, s2, quadrature_n + 1)
    hstep = (s2 - s1) / quadrature_n
    acc = np.zeros_like(f.coords, dtype=complex)
    for i, l in enumerate(nodes):
        w = 0.5 if i in (0, quadrature_n) else 1.0
        acc = acc + w * S.apply_array(float(l), f.coords)
    integral = hstep * acc
    lhs = ops.apply_array(S.generator, integral)
    rhs = S.apply_array(s2, f.coords) - S.apply_array(s1, f.coords)
    defect = float(np.linalg.norm(lhs - rhs))
    return StateVector(integral, f.space_id), defect


def integral_core_witnesses(
    fam: GeneratorFamily,
    basis: Sequence[StateVector],
    s1: float = 0.0,
    s2: float = 0.5,
    quadrature_n: int = 64,
) -> list:
    """Core witnesses built from semigroup integrals: targets integrate
    T_0(l)f and the approximating families integrate T_s(l)f, so semigroup
    convergence alone certifies them."""
    S0 = ops.semigroup(fam.at(0.0))
    out = []
    for f in basis:
        target, _ = core_elements_from_integrals(S0, f, s1, s2, quadrature_n)

        def make(fvec):
            def build(s):
                Ss = ops.semigroup(fam.at(s))
                val, _ = core_elements_from_integrals(Ss, fvec, s1, s2, quadrature_n)
                return val

            return build

        out.append(CoreWitness(f=target, family=make(f)))
    return out
