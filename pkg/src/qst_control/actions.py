"""Control actions: which sites get a field during one step.

An action is a per-site field pattern held constant for one step.  Two
families are provided:

* ``site_by_site``: n+1 actions; action 0 applies no field, action k
  (1 <= k <= n) applies the field to site k alone.  This is the fine-grained
  set whose size grows with the chain.
* ``zhang16``: a fixed 16-action set for chains with n >= 6, acting only
  near the ends.  Action 0 is free evolution and action 15 drives all
  sites.  Actions 1-7 switch subsets of the first three sites: the binary
  digits of the id select sites 1-3, bit b (value 2^b) mapping to site
  b + 1.  Actions 8-14 mirror that on the last three sites: with
  m = id - 7, bit b of m maps to site n - b, so 8 drives {n}, 9 drives
  {n-1}, 10 drives {n, n-1}, ..., 14 drives {n, n-1, n-2}.

Site numbers in this module's docstrings are 1-based to match the usual
labelling of chain ends; masks are 0-based arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import ChainSpec, build_step_hamiltonian, step_propagator


@dataclass(frozen=True)
class Action:
    """One control choice: an id and the per-site field values it applies."""

    id: int
    field_mask: np.ndarray

    def __post_init__(self) -> None:
        mask = np.asarray(self.field_mask, dtype=float)
        mask.setflags(write=False)
        object.__setattr__(self, "field_mask", mask)

    @property
    def support(self) -> tuple[int, ...]:
        """0-based indices of the driven sites."""
        return tuple(int(i) for i in np.nonzero(self.field_mask)[0])


@dataclass(frozen=True)
class ActionSet:
    """Immutable, contiguously numbered family of actions for one chain size."""

    kind: str
    n: int
    h: float
    actions: tuple[Action, ...] = field(repr=False)

    def __post_init__(self) -> None:
        ids = [a.id for a in self.actions]
        if ids != list(range(len(self.actions))):
            raise ValueError("action ids must be 0..len-1 in order")
        for a in self.actions:
            if a.field_mask.shape != (self.n,):
                raise ValueError(
                    f"action {a.id} mask has shape {a.field_mask.shape}, expected ({self.n},)"
                )

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, action_id: int) -> Action:
        return self.actions[action_id]

    @property
    def masks(self) -> np.ndarray:
        """(n_actions, n) matrix of field values."""
        return np.stack([a.field_mask for a in self.actions])

    def id_from_mask(self, mask) -> int:
        """Recover the action id whose field pattern matches ``mask``."""
        mask = np.asarray(mask, dtype=float)
        for a in self.actions:
            if np.array_equal(a.field_mask, mask):
                return a.id
        raise ValueError("no action with that field pattern in this set")


def site_by_site_set(n: int, h: float = 100.0) -> ActionSet:
    """The n+1 single-site actions (0 = no field, k = field on site k)."""
    if n < 2:
        raise ValueError(f"chain needs at least 2 sites, got n={n}")
    if h < 0:
        raise ValueError(f"field strength must be nonnegative, got {h}")
    actions = []
    for a in range(n + 1):
        mask = np.zeros(n)
        if a > 0:
            mask[a - 1] = h
        actions.append(Action(a, mask))
    return ActionSet(kind="site_by_site", n=n, h=h, actions=tuple(actions))


def zhang16_sites(action_id: int, n: int) -> tuple[int, ...]:
    """0-based driven sites of zhang16 action ``action_id`` on an n-chain."""
    if not 0 <= action_id <= 15:
        raise ValueError(f"zhang16 ids run 0..15, got {action_id}")
    if action_id == 0:
        return ()
    if action_id == 15:
        return tuple(range(n))
    if action_id <= 7:
        return tuple(b for b in range(3) if action_id >> b & 1)
    m = action_id - 7
    return tuple(sorted(n - 1 - b for b in range(3) if m >> b & 1))


def zhang16_id_from_sites(sites, n: int) -> int:
    """Inverse of :func:`zhang16_sites` (decodes from the driven-site support)."""
    sites = tuple(sorted(int(s) for s in sites))
    if sites == ():
        return 0
    if sites == tuple(range(n)):
        return 15
    if all(s <= 2 for s in sites):
        return sum(1 << s for s in sites)
    if all(s >= n - 3 for s in sites):
        return 7 + sum(1 << (n - 1 - s) for s in sites)
    raise ValueError(f"support {sites} is not expressible in the 16-action set")


def zhang16_set(n: int, h: float = 100.0) -> ActionSet:
    """The fixed 16-action end-control set (requires n >= 6).

    The lower bound keeps the head block (sites 1-3) and the tail block
    (sites n-2..n) disjoint so all 16 patterns are distinct.
    """
    if n < 6:
        raise ValueError(f"the 16-action set needs n >= 6 so the end blocks do not overlap, got n={n}")
    if h < 0:
        raise ValueError(f"field strength must be nonnegative, got {h}")
    actions = []
    for a in range(16):
        mask = np.zeros(n)
        for s in zhang16_sites(a, n):
            mask[s] = h
        actions.append(Action(a, mask))
    return ActionSet(kind="zhang16", n=n, h=h, actions=tuple(actions))


_SET_BUILDERS = {"site_by_site": site_by_site_set, "zhang16": zhang16_set}


def make_action_set(kind: str, n: int, h: float = 100.0) -> ActionSet:
    """Build an action set by family name ('site_by_site' or 'zhang16')."""
    try:
        builder = _SET_BUILDERS[kind]
    except KeyError:
        raise ValueError(f"unknown action set kind {kind!r}; choose from {sorted(_SET_BUILDERS)}") from None
    return builder(n, h)


@dataclass(frozen=True)
class PropagatorCache:
    """Precomputed step unitaries, one per action, for a fixed chain and dt.

    Everything downstream (GA fitness, DQN environment, validation
    rollouts) consumes propagators through this cache, so each unitary is
    computed exactly once per experiment and can be shared across threads;
    the arrays are frozen to keep that sharing safe.
    """

    action_set: ActionSet
    spec: ChainSpec
    unitaries: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        u = np.ascontiguousarray(self.unitaries, dtype=complex)
        expected = (len(self.action_set), self.spec.n, self.spec.n)
        if u.shape != expected:
            raise ValueError(f"unitaries must have shape {expected}, got {u.shape}")
        u.setflags(write=False)
        object.__setattr__(self, "unitaries", u)

    def __len__(self) -> int:
        return len(self.action_set)

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def dt(self) -> float:
        return self.spec.dt


def build_cache(action_set: ActionSet, spec: ChainSpec) -> PropagatorCache:
    """Exponentiate every action's step Hamiltonian once."""
    if action_set.n != spec.n:
        raise ValueError(f"action set is for n={action_set.n} but the chain has n={spec.n}")
    unitaries = np.empty((len(action_set), spec.n, spec.n), dtype=complex)
    for a in action_set.actions:
        h_mat = build_step_hamiltonian(spec, a.field_mask)
        unitaries[a.id] = step_propagator(h_mat, spec.dt)
    return PropagatorCache(action_set=action_set, spec=spec, unitaries=unitaries)
