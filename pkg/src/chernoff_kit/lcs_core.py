"""State vectors, seminorm families and derived seminorms.

The model space is a finite-dimensional coordinate space (real or complex)
whose topology is described by a finite list of seminorms.  Derived
seminorms take the supremum of a base seminorm over iterated powers of a
Chernoff function sampled on a finite step lattice; every finite sample is
a lower bound on the true supremum and is monotone under lattice
refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .chernoff import ChernoffFn


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class StateVector:
    """Element of the discretized space: coordinates plus a space tag."""

    coords: np.ndarray
    space_id: str = "default"

    def __post_init__(self):
        arr = np.atleast_1d(np.asarray(self.coords))
        object.__setattr__(self, "coords", arr)

    @property
    def dim(self) -> int:
        return self.coords.shape[0]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coords)))


def require_same_space(x: StateVector, dim: int, what: str = "vector") -> None:
    if x.dim != dim:
        raise DimensionMismatchError(
            f"{what}: expected dimension {dim}, got {x.dim}"
        )


@dataclass(frozen=True)
class SeminormFamily:
    """Finite indexed family of seminorm evaluators.

    Each member maps a coordinate array to a nonnegative float and must
    satisfy absolute homogeneity and the triangle inequality.
    """

    members: tuple
    index_labels: tuple

    def __post_init__(self):
        if len(self.members) != len(self.index_labels):
            raise ValueError("members and index_labels must have equal length")

    def __len__(self) -> int:
        return len(self.members)

    def index_of(self, label: str) -> int:
        try:
            return self.index_labels.index(label)
        except ValueError:
            raise IndexError(f"no seminorm labelled {label!r}") from None


def l2_family() -> SeminormFamily:
    return SeminormFamily(
        members=(lambda a: float(np.linalg.norm(a)),),
        index_labels=("l2",),
    )


def sup_family() -> SeminormFamily:
    return SeminormFamily(
        members=(lambda a: float(np.max(np.abs(a))) if a.size else 0.0,),
        index_labels=("sup",),
    )


def l2_sup_family() -> SeminormFamily:
    """The default pair used by the grid scenarios."""
    return SeminormFamily(
        members=(
            lambda a: float(np.linalg.norm(a)),
            lambda a: float(np.max(np.abs(a))),
        ),
        index_labels=("l2", "sup"),
    )


def disc_sup_family(points: np.ndarray, radii: Sequence[float]) -> SeminormFamily:
    """Sup seminorms over nested discs |z| <= r of a sampled complex domain.

    ``points`` holds the complex sample node for each coordinate; each
    radius r contributes the seminorm sup of |f| over nodes with |z| <= r.
    """
    members = []
    labels = []
    absz = np.abs(points)
    for r in radii:
        mask = absz <= r + 1e-12
        if not np.any(mask):
            raise ValueError(f"no grid node inside radius {r}")
        members.append(
            (lambda m: (lambda a: float(np.max(np.abs(a[m])))))(mask)
        )
        labels.append(f"sup_r={r:g}")
    return SeminormFamily(members=tuple(members), index_labels=tuple(labels))


@dataclass(frozen=True)
class LatticeSpec:
    """Finite sample of the step-power family {F^m(step) : m*step <= s_max}."""

    s_max: float
    step_values: tuple
    power_caps: tuple = ()

    def __post_init__(self):
        if self.s_max < 0:
            raise ValueError("s_max must be >= 0")
        steps = tuple(float(v) for v in self.step_values)
        caps = self.power_caps
        if not caps:
            caps = tuple(
                int(np.floor(self.s_max / v + 1e-12)) if v > 0 else 0
                for v in steps
            )
        object.__setattr__(self, "step_values", steps)
        object.__setattr__(self, "power_caps", tuple(int(c) for c in caps))
        for v, c in zip(steps, caps):
            if v > 0 and c * v > self.s_max * (1 + 1e-12):
                raise ValueError(f"power cap {c} exceeds horizon for step {v}")

    @classmethod
    def geometric(
        cls, s_max: float, steps_per_decade: int = 20, decades: int = 2
    ) -> "LatticeSpec":
        """Geometric step grid from s_max down over the given decades."""
        if s_max <= 0:
            return cls(s_max=max(s_max, 0.0), step_values=())
        n = steps_per_decade * decades
        steps = s_max * 10.0 ** (-np.arange(n + 1) / steps_per_decade)
        return cls(s_max=s_max, step_values=tuple(steps))

    def pairs(self, s: float):
        """Yield (m, step) with 1 <= m <= cap and m*step <= s."""
        for step, cap in zip(self.step_values, self.power_caps):
            if step <= 0:
                continue
            top = min(cap, int(np.floor(s / step + 1e-12)))
            if top >= 1:
                yield step, top


def eval_seminorm(family: SeminormFamily, alpha: int, x: StateVector) -> float:
    """Evaluate the alpha-th seminorm of the family on x."""
    if isinstance(alpha, str):
        alpha = family.index_of(alpha)
    if not 0 <= alpha < len(family):
        raise IndexError(f"seminorm index {alpha} out of range")
    return family.members[alpha](x.coords)


def derived_seminorm(
    family: SeminormFamily,
    alpha: int,
    F: "ChernoffFn",
    s: float,
    lattice: LatticeSpec,
    x: StateVector,
) -> float:
    """Supremum of the base seminorm over sampled powers F(step)^m, m*step <= s.

    The identity (m = 0) is always included, so the result is at least the
    plain seminorm; refinement of the lattice can only increase it.
    """
    if s < 0:
        raise ValueError("s must be >= 0")
    if lattice.s_max < s - 1e-12:
        raise ValueError("lattice horizon smaller than s")
    if isinstance(alpha, str):
        alpha = family.index_of(alpha)
    p = family.members[alpha]
    best = p(x.coords)
    for step, top in lattice.pairs(s):
        y = x.coords
        for _ in range(top):
            y = F.eval(step, y)
            v = p(y)
            if v > best:
                best = v
    return best


def iterated_derived_seminorm(
    family: SeminormFamily,
    alpha: int,
    specs: Sequence[tuple],
    lattice: LatticeSpec,
    x: StateVector,
) -> float:
    """Nested derived seminorm for a list of (F_i, s_i) specifications.

    The recursion applies the last family's lattice powers to x and takes
    the derived seminorm of the remaining specs on each image; a single
    spec reduces to :func:`derived_seminorm`.
    """
    if not specs:
        return eval_seminorm(family, alpha, x)
    F_last, s_last = specs[-1]
    if len(specs) == 1:
        return derived_seminorm(family, alpha, F_last, s_last, lattice, x)
    if s_last < 0:
        raise ValueError("each s_i must be >= 0")
    head = specs[:-1]
    best = iterated_derived_seminorm(family, alpha, head, lattice, x)
    for step, top in lattice.pairs(s_last):
        y = x.coords
        for _ in range(top):
            y = F_last.eval(step, y)
            v = iterated_derived_seminorm(
                family, alpha, head, lattice, StateVector(y, x.space_id)
            )
            if v > best:
                best = v
    return best
