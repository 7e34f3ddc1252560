"""Disordered ensemble geometry and pairwise dipolar couplings."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .units import PhysicalParams

MAX_REJECTION_ATTEMPTS = 1_000_000
Z_AXIS = (0.0, 0.0, 1.0)


class PackingError(RuntimeError):
    """Rejection sampling could not place all spins."""


class NearFieldWarning(UserWarning):
    pass


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SpinGeometry:
    positions: np.ndarray
    axis: np.ndarray
    qubit_position: np.ndarray | None = None
    seed: int | None = None
    min_separation: float = 0.0
    diameter: float | None = None

    def __post_init__(self):
        pos = _frozen(self.positions).reshape(-1, 3)
        axis = _frozen(self.axis)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ValueError("axis must be a unit vector")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "axis", axis)
        if self.qubit_position is not None:
            object.__setattr__(self, "qubit_position", _frozen(self.qubit_position))

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    @property
    def qubit_distance(self) -> float | None:
        if self.qubit_position is None:
            return None
        return float(np.linalg.norm(self.qubit_position - self.centroid))

    @property
    def near_field(self) -> bool:
        d = self.qubit_distance
        return d is not None and self.diameter is not None and d < self.diameter

    def without_qubit(self) -> "SpinGeometry":
        return replace(self, qubit_position=None)

    def __eq__(self, other):
        if not isinstance(other, SpinGeometry):
            return NotImplemented
        q1, q2 = self.qubit_position, other.qubit_position
        same_q = (q1 is None and q2 is None) or (
            q1 is not None and q2 is not None and np.array_equal(q1, q2)
        )
        return (
            np.array_equal(self.positions, other.positions)
            and np.array_equal(self.axis, other.axis)
            and same_q
        )


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """``v0[i, j]`` is the scalar dipolar coupling in MHz; ``v_qubit[i]`` couples
    ensemble spin i to the remote qubit."""

    v0: np.ndarray
    v_qubit: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.v0.shape[0]


def _coupling_kernel(d: np.ndarray, axis: np.ndarray, j_dd: float) -> np.ndarray:
    # shared by the scalar and matrix paths so both round identically
    dx, dy, dz = d[..., 0], d[..., 1], d[..., 2]
    dist2 = dx * dx + dy * dy + dz * dz
    dist = np.sqrt(dist2)
    proj = axis[0] * dx + axis[1] * dy + axis[2] * dz
    cos2 = proj * proj / dist2
    return j_dd * (1.0 - 3.0 * cos2) / (dist2 * dist)


def dipolar_coupling(p1, p2, axis, j_dd: float) -> float:
    """j_dd (1 - 3 cos^2 theta) / d^3 for spins at ``p1`` and ``p2``.

    theta is the angle between ``axis`` and the separation vector.
    """
    d = np.asarray(p2, dtype=float) - np.asarray(p1, dtype=float)
    if not np.any(d):
        raise ValueError("coincident points have no finite dipolar coupling")
    return float(_coupling_kernel(d, np.asarray(axis, dtype=float), j_dd))


def _uniform_in_ball(rng: np.random.Generator, radius: float) -> np.ndarray:
    while True:
        p = rng.uniform(-radius, radius, size=3)
        if p @ p <= radius * radius:
            return p


def sample_ensemble(
    n: int,
    diameter: float,
    seed: int,
    min_separation: float = 1.0,
    axis=Z_AXIS,
    max_attempts: int = MAX_REJECTION_ATTEMPTS,
) -> SpinGeometry:
    """Place ``n`` spins uniformly in a ball of the given diameter (centred at the origin).

    Spins are added one at a time; a candidate closer than ``min_separation``
    to an accepted spin is redrawn.  Deterministic in ``seed``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if diameter <= 0:
        raise ValueError("diameter must be > 0")
    rng = np.random.default_rng(seed)
    radius = diameter / 2
    pts = np.empty((n, 3))
    count = 0
    attempts = 0
    min2 = min_separation * min_separation
    while count < n:
        if attempts >= max_attempts:
            raise PackingError(
                f"placed {count}/{n} spins after {attempts} attempts "
                f"(diameter={diameter}, min_separation={min_separation})"
            )
        attempts += 1
        p = _uniform_in_ball(rng, radius)
        if count:
            d = pts[:count] - p
            if np.min(np.einsum("ij,ij->i", d, d)) < min2:
                continue
        pts[count] = p
        count += 1
    return SpinGeometry(
        positions=pts,
        axis=np.asarray(axis, dtype=float),
        seed=seed,
        min_separation=min_separation,
        diameter=diameter,
    )


def place_qubit(geom: SpinGeometry, distance: float, direction=(1.0, 0.0, 0.0)) -> SpinGeometry:
    """Put the remote qubit at ``centroid + distance * direction``.

    Emits :class:`NearFieldWarning` when the qubit sits closer to the centroid
    than one ensemble diameter.
    """
    if not distance > 0:
        raise ValueError("qubit distance must be > 0")
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    out = replace(geom, qubit_position=geom.centroid + distance * u)
    if out.near_field:
        warnings.warn(
            f"qubit at {distance} nm is inside the near-field region (diameter {geom.diameter} nm)",
            NearFieldWarning,
            stacklevel=2,
        )
    return out


def build_couplings(geom: SpinGeometry, params: PhysicalParams) -> CouplingMatrix:
    pos = geom.positions
    d = pos[None, :, :] - pos[:, None, :]
    n = geom.n
    off = ~np.eye(n, dtype=bool)
    if n > 1 and np.any(np.all(d[off] == 0, axis=-1)):
        raise ValueError("coincident spins in geometry")
    v0 = np.zeros((n, n))
    with np.errstate(divide="ignore", invalid="ignore"):
        v = _coupling_kernel(d, geom.axis, params.j_dd)
    v0[off] = v[off]
    v0 = 0.5 * (v0 + v0.T)  # exact: kernel is even in d
    v_qubit = None
    if geom.qubit_position is not None:
        dq = geom.qubit_position[None, :] - pos
        if np.any(np.all(dq == 0, axis=-1)):
            raise ValueError("qubit coincides with an ensemble spin")
        v_qubit = _coupling_kernel(dq, geom.axis, params.j_dd)
    v0.setflags(write=False)
    return CouplingMatrix(v0=v0, v_qubit=v_qubit)


def angular_factor(geom: SpinGeometry) -> float:
    """1 - 3 cos^2 of the qubit-centroid line relative to the NV axis."""
    if geom.qubit_position is None:
        raise ValueError("geometry has no qubit")
    d = geom.qubit_position - geom.centroid
    c = (geom.axis @ d) / np.linalg.norm(d)
    return float(1.0 - 3.0 * c * c)


def nearest_neighbor_distances(geom: SpinGeometry) -> np.ndarray:
    pos = geom.positions
    if geom.n < 2:
        return np.array([])
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    np.fill_diagonal(d, np.inf)
    return d.min(axis=1)


def typical_vdd(geom: SpinGeometry, couplings: CouplingMatrix) -> float:
    """Median |V0| over nearest-neighbour pairs: the ensemble's dipolar scale."""
    if geom.n < 2:
        return 0.0
    pos = geom.positions
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    np.fill_diagonal(d, np.inf)
    nn = d.argmin(axis=1)
    return float(np.median(np.abs(couplings.v0[np.arange(geom.n), nn])))


def save_positions(geom: SpinGeometry, path) -> None:
    """Write one ``x y z`` line per spin (nm); axis/qubit go in ``#`` header lines."""
    lines = ["# axis " + " ".join(repr(float(a)) for a in geom.axis)]
    if geom.qubit_position is not None:
        lines.append("# qubit " + " ".join(repr(float(a)) for a in geom.qubit_position))
    if geom.seed is not None:
        lines.append(f"# seed {geom.seed}")
    if geom.diameter is not None:
        lines.append(f"# diameter {geom.diameter!r}")
    lines.append(f"# min_separation {geom.min_separation!r}")
    lines += [" ".join(repr(float(c)) for c in p) for p in geom.positions]
    Path(path).write_text("\n".join(lines) + "\n")


def load_positions(path) -> SpinGeometry:
    axis = np.array(Z_AXIS)
    qubit = None
    seed = None
    diameter = None
    min_sep = 0.0
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, *vals = line[1:].split()
            if key == "axis":
                axis = np.array([float(v) for v in vals])
            elif key == "qubit":
                qubit = np.array([float(v) for v in vals])
            elif key == "seed":
                seed = int(vals[0])
            elif key == "diameter":
                diameter = float(vals[0])
            elif key == "min_separation":
                min_sep = float(vals[0])
            continue
        x, y, z = (float(v) for v in line.split())
        rows.append((x, y, z))
    return SpinGeometry(
        positions=np.array(rows),
        axis=axis,
        qubit_position=qubit,
        seed=seed,
        min_separation=min_sep,
        diameter=diameter,
    )
