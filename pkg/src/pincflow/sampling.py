"""Latin hypercube sampling of collocation, boundary, and initial-condition sets.

The generator is deliberately simple and fully documented so batches are
reproducible everywhere: one ``numpy`` PCG64 stream per batch, and for each
dimension a permutation of the n strata followed by n uniform intra-stratum
offsets, drawn in dimension order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROLES = ("pde", "bc_up", "bc_down", "ic", "validation")


@dataclass(frozen=True)
class SampleBatch:
    """An immutable point set in network-input layout.

    ``points`` always has the width of the network input; coordinates listed
    in ``sampled_dims`` were drawn by LHS, the rest are pinned constants
    (boundary position, initial time).
    """

    role: str
    points: np.ndarray
    sampled_dims: tuple[int, ...]
    seed: int

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown batch role {self.role!r}")
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        self.points.setflags(write=False)

    def __len__(self):
        return self.points.shape[0]


def lhs(n: int, d: int, seed: int) -> np.ndarray:
    """Stratified unit-cube sample: one point per stratum in every dimension."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = np.random.default_rng(seed)
    points = np.empty((n, d))
    for j in range(d):
        strata = rng.permutation(n)
        offsets = rng.random(n)
        points[:, j] = (strata + offsets) / n
    return points


@dataclass(frozen=True)
class TrainingSets:
    pde: SampleBatch
    bc_up: SampleBatch
    bc_down: SampleBatch
    ic: SampleBatch | None = None


def _batch_seeds(seed: int) -> list[int]:
    # one independent child stream per batch, in a fixed order
    children = np.random.SeedSequence(seed).spawn(4)
    return [int(child.generate_state(1)[0]) for child in children]


def build_training_sets(regime: str, sizes: dict, seed: int) -> TrainingSets:
    """Draw all point sets for one training run.

    sizes uses keys n_pde, n_bc and, for the transient regime, n_ic.  The
    boundary budget is split evenly between the two boundaries; an odd count
    gives the upstream side the extra point.
    """
    if regime not in ("steady", "transient"):
        raise ValueError(f"unknown regime {regime!r}")
    n_pde, n_bc = int(sizes["n_pde"]), int(sizes["n_bc"])
    if n_pde < 1 or n_bc < 1:
        raise ValueError("set sizes must be >= 1")
    n_up = (n_bc + 1) // 2
    n_down = n_bc - n_up
    seed_pde, seed_up, seed_down, seed_ic = _batch_seeds(seed)

    if regime == "steady":
        pde = SampleBatch("pde", lhs(n_pde, 2, seed_pde), (0, 1), seed_pde)
        up = _pin_boundary(_lhs_or_empty(n_up, 1, seed_up), 0.0, "bc_up", seed_up)
        down = _pin_boundary(_lhs_or_empty(n_down, 1, seed_down), 1.0, "bc_down", seed_down)
        return TrainingSets(pde=pde, bc_up=up, bc_down=down)

    n_ic = int(sizes["n_ic"])
    if n_ic < 1:
        raise ValueError("transient training needs n_ic >= 1")
    pde = SampleBatch("pde", lhs(n_pde, 4, seed_pde), (0, 1, 2, 3), seed_pde)
    up = _pin_boundary(_lhs_or_empty(n_up, 3, seed_up), 0.0, "bc_up", seed_up)
    down = _pin_boundary(_lhs_or_empty(n_down, 3, seed_down), 1.0, "bc_down", seed_down)
    ic_free = lhs(n_ic, 3, seed_ic)  # (position, previous control, control)
    ic_points = np.column_stack(
        [ic_free[:, 0], np.zeros(n_ic), ic_free[:, 1], ic_free[:, 2]]
    )
    ic = SampleBatch("ic", ic_points, (0, 2, 3), seed_ic)
    return TrainingSets(pde=pde, bc_up=up, bc_down=down, ic=ic)


def _lhs_or_empty(n: int, d: int, seed: int) -> np.ndarray:
    # n_bc = 1 puts the single point upstream, leaving downstream empty
    return lhs(n, d, seed) if n > 0 else np.zeros((0, d))


def _pin_boundary(free: np.ndarray, x_value: float, role: str, seed: int) -> SampleBatch:
    n, d = free.shape
    points = np.column_stack([np.full(n, x_value), free])
    sampled = tuple(range(1, d + 1))
    return SampleBatch(role, points, sampled, seed)
