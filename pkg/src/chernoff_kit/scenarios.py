"""Named, reproducible experiment setups.

Each builder returns an immutable Scenario binding operators, Chernoff
functions, a seminorm family, a trusted reference and default grids.
Built-ins: "heat" (periodic Laplacian + potential splitting),
"schrodinger" (unitary split-step), "dissipative" (random dissipative
operator with implicit Euler) and "mult-example" (the multiplication
semigroup on a disc grid whose generator has no dense resolvent range).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .lcs_core import (
    StateVector,
    SeminormFamily,
    l2_sup_family,
    disc_sup_family,
)
from . import operators as ops
from .operators import LinOp, SemigroupEvaluator
from . import chernoff as ch
from .chernoff import ChernoffFn

BUILTIN_SCENARIOS = ("heat", "schrodinger", "dissipative", "mult-example")

POTENTIALS = {
    "zero": lambda x: np.zeros_like(x),
    "one_plus_cos": lambda x: 1.0 + np.cos(x),
    "constant": lambda x: np.ones_like(x),
    "barrier": lambda x: 5.0 * ((x > np.pi * 0.75) & (x < np.pi * 1.25)).astype(float),
}


@dataclass(frozen=True)
class Scenario:
    """A fully built experiment setup."""

    name: str
    dim: int
    generator: LinOp
    chernoff_fns: dict  # label -> ChernoffFn
    reference: SemigroupEvaluator
    family: SeminormFamily
    initial: StateVector
    t0: float = 1.0
    default_n_grid: tuple = tuple(2 ** k for k in range(4, 15))
    default_t_grid: tuple = tuple(np.linspace(0.0, 1.0, 9))
    space_id: str = "default"
    grid_points: Optional[np.ndarray] = None  # complex nodes (mult example)
    radii: tuple = ()
    primary_fn: str = "main"

    def validate(self) -> None:
        """F(0) = I and the semigroup law, checked before any experiment."""
        rng = np.random.default_rng(99)
        x = rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)
        for label, F in self.chernoff_fns.items():
            if not np.allclose(F.eval(0.0, x), x, rtol=0, atol=1e-14 * self.dim):
                raise ValueError(f"{self.name}/{label}: F(0) != I")
        for l, m in ((0.3, 0.4), (0.1, 0.55)):
            lhs = self.reference.apply_array(l + m, x)
            rhs = self.reference.apply_array(l, self.reference.apply_array(m, x))
            if np.linalg.norm(lhs - rhs) > 1e-10 * (1 + np.linalg.norm(x)):
                raise ValueError(f"{self.name}: semigroup law violated")


def _periodic_gaussian(x: np.ndarray, center: float = np.pi, width: float = 0.5):
    g = np.exp(-((x - center) ** 2) / (2 * width ** 2))
    return g / np.linalg.norm(g)


def _laplacian_symbol(N: int) -> np.ndarray:
    k = np.fft.fftfreq(N) * N  # integer wavenumbers on [0, 2*pi)
    return -(k ** 2)


def build_heat_potential(N: int, potential: str = "one_plus_cos") -> Scenario:
    """Heat + potential splitting: A = periodic spectral Laplacian,
    B = multiplication by -V(x) with V >= 0."""
    if N < 2 or N & (N - 1):
        raise ValueError("N must be a power of two")
    if potential not in POTENTIALS:
        raise ValueError(f"unknown potential {potential!r}")
    x = 2 * np.pi * np.arange(N) / N
    V = POTENTIALS[potential](x)
    A = ops.spectral_multiplier(_laplacian_symbol(N).astype(complex))
    B = ops.diagonal(-V.astype(complex))
    Z = ops.linop_sum(A, B)
    lie = ch.lie_trotter(ops.semigroup(A), ops.semigroup(B))
    fns = {
        "lie": lie,
        "implicit_euler": ch.implicit_euler(Z),
    }
    reference = ops.semigroup(Z, method="dense_expm")
    fns["exact"] = ch.semigroup_chernoff(reference)
    return Scenario(
        name="heat",
        dim=N,
        generator=Z,
        chernoff_fns=fns,
        reference=reference,
        family=l2_sup_family(),
        initial=StateVector(_periodic_gaussian(x).astype(complex), f"grid{N}"),
        space_id=f"grid{N}",
        primary_fn="lie",
    )


def build_schrodinger(N: int, potential: str = "one_plus_cos") -> Scenario:
    """Split-step Schrodinger: A = i * spectral Laplacian, B = -i V;
    both factors are unitary."""
    if N < 2 or N & (N - 1):
        raise ValueError("N must be a power of two")
    if potential not in POTENTIALS:
        raise ValueError(f"unknown potential {potential!r}")
    x = 2 * np.pi * np.arange(N) / N
    V = POTENTIALS[potential](x)
    A = ops.spectral_multiplier(1j * _laplacian_symbol(N))
    B = ops.diagonal(-1j * V)
    Z = ops.linop_sum(A, B)
    lie = ch.lie_trotter(ops.semigroup(A), ops.semigroup(B))
    fns = {"lie": lie, "implicit_euler": ch.implicit_euler(Z)}
    reference = ops.semigroup(Z, method="dense_expm")
    fns["exact"] = ch.semigroup_chernoff(reference)
    packet = _periodic_gaussian(x) * np.exp(2j * x)
    return Scenario(
        name="schrodinger",
        dim=N,
        generator=Z,
        chernoff_fns=fns,
        reference=reference,
        family=l2_sup_family(),
        initial=StateVector(packet.astype(complex), f"grid{N}"),
        t0=0.5,
        default_t_grid=tuple(np.linspace(0.0, 0.5, 9)),
        space_id=f"grid{N}",
        primary_fn="lie",
    )


def dissipative_operator(dim: int, seed: int) -> LinOp:
    """Z = S - P with S random skew-symmetric and P positive semidefinite,
    scaled so ||Z||_2 <= 2; (Z + Z*)/2 = -P guarantees dissipativity."""
    rng = np.random.default_rng(seed)
    K = rng.standard_normal((dim, dim))
    S = K - K.T
    R = rng.standard_normal((dim, dim)) / np.sqrt(dim)
    P = R @ R.T
    Z = S - P
    nrm = np.linalg.norm(Z, 2)
    if nrm > 2.0:
        Z = Z * (2.0 / nrm)
    return ops.dense(Z)


def build_dissipative_random(dim: int, seed: int) -> Scenario:
    if dim < 2:
        raise ValueError("dim must be >= 2")
    Z = dissipative_operator(dim, seed)
    M = Z.matrix
    S_part = ops.dense((M - M.T) / 2.0)
    P_part = ops.dense((M + M.T) / 2.0)  # = -P, negative semidefinite
    fns = {
        "implicit_euler": ch.implicit_euler(Z),
        "lie": ch.lie_trotter(ops.semigroup(S_part), ops.semigroup(P_part)),
    }
    reference = ops.semigroup(Z, method="dense_expm")
    fns["exact"] = ch.semigroup_chernoff(reference)
    rng = np.random.default_rng(seed + 1)
    h = rng.standard_normal(dim)
    h = h / np.linalg.norm(h)
    return Scenario(
        name="dissipative",
        dim=dim,
        generator=Z,
        chernoff_fns=fns,
        reference=reference,
        family=l2_sup_family(),
        initial=StateVector(h.astype(complex), f"R{dim}"),
        space_id=f"R{dim}",
        primary_fn="implicit_euler",
    )


def disc_grid(r_max: float = 1.0, n_radial: int = 64, n_angular: int = 128):
    """Polar sample of the closed disc |z| <= r_max, center node included."""
    radii = r_max * (np.arange(1, n_radial + 1) / n_radial)
    angles = 2 * np.pi * np.arange(n_angular) / n_angular
    zs = np.concatenate(
        [[0.0 + 0.0j], (radii[:, None] * np.exp(1j * angles)[None, :]).ravel()]
    )
    return zs


def build_multiplication_example(
    r_list: Sequence[float], n_radial: int = 64, n_angular: int = 128
) -> Scenario:
    """Multiplication semigroup T(s)f(z) = e^{sz} f(z) on a disc grid.

    The generator Zf(z) = z f(z) is the counterexample whose resolvent
    range is never dense: no candidate g can make (lambda*I - Z)g approach
    f at the node z = lambda when f(lambda) != 0.
    """
    radii = tuple(sorted(float(r) for r in r_list))
    if not radii or radii[0] <= 0:
        raise ValueError("radii must be positive")
    zs = disc_grid(r_max=radii[-1], n_radial=n_radial, n_angular=n_angular)
    Z = ops.diagonal(zs)
    reference = ops.semigroup(Z)  # diagonal e^{sz} multiplier, exact
    fns = {
        "exact": ch.semigroup_chernoff(reference),
        "implicit_euler": ch.implicit_euler(Z),
    }
    f0 = np.ones_like(zs)
    return Scenario(
        name="mult-example",
        dim=zs.shape[0],
        generator=Z,
        chernoff_fns=fns,
        reference=reference,
        family=disc_sup_family(zs, radii),
        initial=StateVector(f0, "disc"),
        space_id="disc",
        grid_points=zs,
        radii=radii,
        primary_fn="exact",
    )


def resolvent_range_gap(
    scenario: Scenario,
    lam: complex,
    f: StateVector,
    candidates: Sequence[StateVector],
    r: float,
) -> dict:
    """Min over candidates g of sup_{|z| <= r} |(lam - z) g(z) - f(z)|.

    eps_grid is the distance from lam to the nearest grid node; when lam
    sits on a node the defect is bounded below by |f(lam)| exactly.
    """
    if scenario.grid_points is None:
        raise ValueError("range-gap check needs the disc-grid scenario")
    if abs(lam) > r + 1e-12:
        raise ValueError("need |lambda| <= r")
    zs = scenario.grid_points
    eps_grid = float(np.min(np.abs(zs - lam)))
    mask = np.abs(zs) <= r + 1e-12
    best = np.inf
    for g in candidates:
        resid = (lam - zs) * g.coords - f.coords
        best = min(best, float(np.max(np.abs(resid[mask]))))
    node = int(np.argmin(np.abs(zs - lam)))
    return {
        "min_defect": best,
        "eps_grid": eps_grid,
        "f_at_node": float(np.abs(f.coords[node])),
    }


def random_polynomial_candidates(
    zs: np.ndarray, count: int, seed: int, max_degree: int = 10
) -> list:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        deg = int(rng.integers(0, max_degree + 1))
        coeffs = rng.standard_normal(deg + 1) + 1j * rng.standard_normal(deg + 1)
        vals = np.polyval(coeffs, zs)
        out.append(StateVector(vals, "disc"))
    return out


def build_scenario(name: str, **kwargs) -> Scenario:
    if name == "heat":
        return build_heat_potential(
            kwargs.get("grid_size", 128), kwargs.get("potential", "one_plus_cos")
        )
    if name == "schrodinger":
        return build_schrodinger(
            kwargs.get("grid_size", 64), kwargs.get("potential", "one_plus_cos")
        )
    if name == "dissipative":
        return build_dissipative_random(
            kwargs.get("dim", 10), kwargs.get("seed", 0)
        )
    if name == "mult-example":
        return build_multiplication_example(
            kwargs.get("radii", (0.5, 1.0)),
            kwargs.get("n_radial", 64),
            kwargs.get("n_angular", 128),
        )
    raise ValueError(f"unknown scenario {name!r}")
