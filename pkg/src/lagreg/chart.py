"""Named coordinate charts with roles.

A chart fixes the array layout used everywhere else: base coordinates
first (leaves, then fibers, then thickening fibers), velocities second in
the same order, and the time coordinate last when present. Velocity names
derive from base names (``x`` -> ``xdot``); thickening fibers are named
``mu_1, mu_2, ...`` with velocities ``mudot_1, mudot_2, ...`` so that every
derived name stays a plain identifier of the expression grammar.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ChartMismatchError, DimensionMismatchError

TIME_NAME = "t"
RESERVED = {TIME_NAME, "sin", "cos", "exp", "log"}


def velocity_name(base: str) -> str:
    if base.startswith("mu_"):
        return "mudot_" + base[3:]
    return base + "dot"


@dataclass(frozen=True)
class ChartSpec:
    """Coordinate names split by role.

    leaves    -- transverse coordinates x^a (l of them)
    fibers    -- coordinates f^A along the degenerate directions (r of them)
    mus       -- thickening fibers mu_A dual to the fibers (0 or r of them)
    has_time  -- append the time coordinate ``t`` (jet charts)
    """

    leaves: tuple = ()
    fibers: tuple = ()
    mus: tuple = ()
    has_time: bool = False

    def __post_init__(self):
        object.__setattr__(self, "leaves", tuple(self.leaves))
        object.__setattr__(self, "fibers", tuple(self.fibers))
        object.__setattr__(self, "mus", tuple(self.mus))
        names = list(self.base_names)
        for name in names:
            if not name.isidentifier() or not name.isascii():
                raise ChartMismatchError(f"coordinate name {name!r} is not an identifier")
            if name in RESERVED:
                raise ChartMismatchError(f"coordinate name {name!r} is reserved")
        everything = list(self.coords)
        if len(set(everything)) != len(everything):
            raise ChartMismatchError(f"coordinate names collide: {everything}")

    @cached_property
    def base_names(self):
        return self.leaves + self.fibers + self.mus

    @cached_property
    def velocity_names(self):
        return tuple(velocity_name(b) for b in self.base_names)

    @cached_property
    def coords(self):
        out = self.base_names + self.velocity_names
        if self.has_time:
            out = out + (TIME_NAME,)
        return out

    @property
    def n_base(self):
        return len(self.base_names)

    @property
    def dim(self):
        return len(self.coords)

    @property
    def time_index(self):
        return 2 * self.n_base if self.has_time else None

    @cached_property
    def index(self):
        return {name: i for i, name in enumerate(self.coords)}

    def base_indices(self):
        return np.arange(self.n_base)

    def velocity_indices(self):
        return np.arange(self.n_base, 2 * self.n_base)

    def velocity_index_of(self, base_position: int) -> int:
        return self.n_base + base_position

    def as_array(self, point) -> np.ndarray:
        """Accept a dict keyed by coordinate name or an array in chart order."""
        if isinstance(point, dict):
            missing = [c for c in self.coords if c not in point]
            if missing:
                raise DimensionMismatchError(f"point missing coordinates {missing}")
            return np.array([float(point[c]) for c in self.coords])
        arr = np.asarray(point, dtype=float)
        if arr.shape != (self.dim,):
            raise DimensionMismatchError(
                f"point has shape {arr.shape}, chart dimension is {self.dim}"
            )
        return arr

    def bindings(self, point) -> dict:
        arr = self.as_array(point)
        return {name: arr[i] for i, name in enumerate(self.coords)}

    def to_dict(self):
        return {
            "leaves": list(self.leaves),
            "fibers": list(self.fibers),
            "mus": list(self.mus),
            "has_time": self.has_time,
        }


@dataclass(frozen=True)
class ThickenedChart:
    """A chart extended by the dual fibers mu_A and their velocities.

    The original chart embeds at mu = mudot = 0; ``embed_indices`` maps each
    original coordinate to its position in the thickened layout, so the
    embedding and the restriction are positional.
    """

    chart: ChartSpec
    original: ChartSpec
    embed_indices: tuple = field(default=())

    @property
    def rank(self):
        return len(self.chart.mus)

    @cached_property
    def mu_positions(self):
        return np.array([self.chart.index[m] for m in self.chart.mus], dtype=int)

    @cached_property
    def mudot_positions(self):
        return np.array(
            [self.chart.index[velocity_name(m)] for m in self.chart.mus], dtype=int
        )

    def embed_point(self, point, mu=None, mudot=None) -> np.ndarray:
        """Lift a point of the original chart to the thickened chart."""
        arr = self.original.as_array(point)
        out = np.zeros(self.chart.dim)
        out[list(self.embed_indices)] = arr
        if mu is not None:
            out[self.mu_positions] = mu
        if mudot is not None:
            out[self.mudot_positions] = mudot
        return out

    def restrict_point(self, point) -> np.ndarray:
        arr = self.chart.as_array(point)
        return arr[list(self.embed_indices)]

    def off_section_norm(self, point) -> float:
        arr = self.chart.as_array(point)
        if self.rank == 0:
            return 0.0
        chunk = np.concatenate([arr[self.mu_positions], arr[self.mudot_positions]])
        return float(np.linalg.norm(chunk))


def thicken(chart: ChartSpec) -> ThickenedChart:
    """Adjoin one dual fiber mu_A per fiber coordinate of `chart`."""
    if chart.mus:
        raise ChartMismatchError("chart is already thickened")
    r = len(chart.fibers)
    mus = tuple(f"mu_{A + 1}" for A in range(r))
    thick = ChartSpec(
        leaves=chart.leaves, fibers=chart.fibers, mus=mus, has_time=chart.has_time
    )
    embed = tuple(thick.index[c] for c in chart.coords)
    return ThickenedChart(chart=thick, original=chart, embed_indices=embed)
