"""Station geometry, target-area grid, angle grids, and steering dictionaries.

Layout conventions used across the package:
  * grid cells are ordered row-major over (x, y): k = ix * grid_y + iy,
    with cell centers at (x_min + (ix+0.5)*dx, y_min + (iy+0.5)*dy);
  * the stacked snapshot y concatenates stations in id order;
  * the location coefficient vector x concatenates per-station blocks of
    length K (station-major), so X[k, m] = x[m*K + k].
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError, FieldOfViewError, GeometryError

TWO_PI = 2.0 * np.pi


def wrap_angle(angle):
    """Wrap an angle (radians) into (-pi, pi]."""
    return np.pi - (np.pi - angle) % TWO_PI


@dataclass(frozen=True)
class BaseStation:
    """A uniform linear array at a known position.

    broadside is the orientation of the array normal in global coordinates;
    element_spacing is in wavelengths.
    """

    station_id: int
    position: tuple
    num_antennas: int
    broadside: float
    element_spacing: float = 0.5

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ConfigError(f"station {self.station_id}: num_antennas must be >= 1")
        if self.element_spacing <= 0:
            raise ConfigError(f"station {self.station_id}: element_spacing must be > 0")
        if not (-np.pi < self.broadside <= np.pi):
            raise ConfigError(f"station {self.station_id}: broadside must lie in (-pi, pi]")
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))

    @property
    def xy(self):
        return np.array(self.position)


@dataclass(frozen=True)
class TargetArea:
    """Rectangular target area discretized into grid_x * grid_y cells."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    grid_x: int
    grid_y: int

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ConfigError("target area bounds must satisfy x_min < x_max and y_min < y_max")
        if self.grid_x < 1 or self.grid_y < 1:
            raise ConfigError("grid_x and grid_y must be >= 1")

    @property
    def num_cells(self):
        return self.grid_x * self.grid_y

    @property
    def spacing(self):
        return ((self.x_max - self.x_min) / self.grid_x,
                (self.y_max - self.y_min) / self.grid_y)

    @cached_property
    def cell_centers(self):
        """(K, 2) array of cell-center coordinates, row-major over (x, y)."""
        dx, dy = self.spacing
        cx = self.x_min + (np.arange(self.grid_x) + 0.5) * dx
        cy = self.y_min + (np.arange(self.grid_y) + 0.5) * dy
        xx, yy = np.meshgrid(cx, cy, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def index_to_position(self, k):
        """Coordinates of cell k (0-based, row-major over (x, y))."""
        if not 0 <= k < self.num_cells:
            raise GeometryError(f"cell index {k} outside 0..{self.num_cells - 1}")
        return self.cell_centers[k]

    def position_to_index(self, p):
        """Index of the grid cell whose center is nearest to p."""
        d2 = np.sum((self.cell_centers - np.asarray(p)) ** 2, axis=1)
        return int(np.argmin(d2))

    def contains(self, p):
        return (self.x_min <= p[0] <= self.x_max) and (self.y_min <= p[1] <= self.y_max)

    def sample_position(self, rng):
        """Draw a position uniformly over the area (off-grid in general)."""
        return rng.uniform([self.x_min, self.y_min], [self.x_max, self.y_max])


@dataclass(frozen=True)
class AngleGrid:
    """Uniform grid of local angles inside a station's (-pi/2, pi/2) field of view."""

    station_id: int
    angles: tuple

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        if a.size < 1:
            raise ConfigError(f"angle grid for station {self.station_id} is empty")
        if np.any(np.diff(a) <= 0):
            raise ConfigError(f"angle grid for station {self.station_id} must be strictly increasing")
        if np.any(np.abs(a) >= np.pi / 2):
            raise ConfigError(
                f"angle grid for station {self.station_id} must lie strictly inside (-pi/2, pi/2)")
        object.__setattr__(self, "angles", tuple(float(v) for v in a))

    @classmethod
    def uniform(cls, station_id, count):
        """count angles at the centers of uniform cells of (-pi/2, pi/2)."""
        a = -np.pi / 2 + (np.arange(count) + 0.5) * np.pi / count
        return cls(station_id, tuple(a))

    def __len__(self):
        return len(self.angles)


def aoa(p, station: BaseStation):
    """Four-quadrant angle of arrival of position p at a station, in (-pi, pi]."""
    d = np.asarray(p, dtype=float) - station.xy
    if d[0] == 0.0 and d[1] == 0.0:
        raise GeometryError(f"position {tuple(p)} coincides with station {station.station_id}")
    ang = float(np.arctan2(d[1], d[0]))
    return np.pi if ang == -np.pi else ang


def broadside_toward(station_position, target):
    """Broadside angle that points a station at target (used as the scene default)."""
    d = np.asarray(target, dtype=float) - np.asarray(station_position, dtype=float)
    if d[0] == 0.0 and d[1] == 0.0:
        raise GeometryError("broadside target coincides with the station position")
    return float(np.arctan2(d[1], d[0]))


def ula_response(num_antennas, element_spacing, local_angle):
    """Unit-modulus ULA response at a local angle: exp(j 2 pi d n sin(theta))."""
    if not abs(local_angle) < np.pi / 2:
        raise FieldOfViewError(
            f"local angle {local_angle:.4f} rad outside the open (-pi/2, pi/2) field of view")
    n = np.arange(num_antennas)
    return np.exp(1j * TWO_PI * element_spacing * n * np.sin(local_angle))


def steering(station: BaseStation, global_aoa):
    """Steering vector of a station for a global arrival angle."""
    local = wrap_angle(global_aoa - station.broadside)
    return ula_response(station.num_antennas, station.element_spacing, local)


def build_location_dictionary(station: BaseStation, area: TargetArea):
    """Per-station location dictionary: column k is the steering vector at aoa(cell k).

    Raises FieldOfViewError listing the offending cell indices if any grid
    point falls outside the station's field of view.
    """
    centers = area.cell_centers
    locals_ = wrap_angle(np.arctan2(centers[:, 1] - station.position[1],
                                    centers[:, 0] - station.position[0]) - station.broadside)
    bad = np.flatnonzero(np.abs(locals_) >= np.pi / 2)
    if bad.size:
        shown = ", ".join(str(int(b)) for b in bad[:10])
        more = "" if bad.size <= 10 else f" (+{bad.size - 10} more)"
        err = FieldOfViewError(
            f"station {station.station_id}: grid cells outside field of view: {shown}{more}")
        err.cell_indices = bad.tolist()
        raise err
    n = np.arange(station.num_antennas)[:, None]
    return np.exp(1j * TWO_PI * station.element_spacing * n * np.sin(locals_)[None, :])


def build_angle_dictionary(station: BaseStation, grid: AngleGrid):
    """Per-station angle dictionary: column l is the steering vector at local angle l."""
    a = np.asarray(grid.angles)
    n = np.arange(station.num_antennas)[:, None]
    return np.exp(1j * TWO_PI * station.element_spacing * n * np.sin(a)[None, :])


@dataclass(frozen=True)
class Dictionary:
    """Per-station steering dictionaries plus the stacked-vector layout.

    The block-diagonal operators are never materialized; solvers apply the
    per-station blocks directly.
    """

    a_blocks: tuple
    b_blocks: tuple

    @property
    def num_stations(self):
        return len(self.a_blocks)

    @property
    def num_cells(self):
        return self.a_blocks[0].shape[1]

    @property
    def antenna_counts(self):
        return tuple(a.shape[0] for a in self.a_blocks)

    @property
    def angle_counts(self):
        return tuple(b.shape[1] for b in self.b_blocks)

    @property
    def signal_length(self):
        return sum(self.antenna_counts)

    @property
    def angle_length(self):
        return sum(self.angle_counts)

    @cached_property
    def y_slices(self):
        return _block_slices(self.antenna_counts)

    @cached_property
    def z_slices(self):
        return _block_slices(self.angle_counts)

    @cached_property
    def x_slices(self):
        K = self.num_cells
        return tuple(slice(m * K, (m + 1) * K) for m in range(self.num_stations))


def _block_slices(counts):
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return tuple(slice(int(offsets[m]), int(offsets[m + 1])) for m in range(len(counts)))


class Scene:
    """Immutable bundle of stations, target area, angle grids, and dictionaries."""

    def __init__(self, stations, area, angle_grids):
        stations = tuple(stations)
        angle_grids = tuple(angle_grids)
        if len(angle_grids) != len(stations):
            raise ConfigError("need one angle grid per station")
        for st, ag in zip(stations, angle_grids):
            if st.station_id != ag.station_id:
                raise ConfigError(
                    f"angle grid id {ag.station_id} does not match station id {st.station_id}")
        self.stations = stations
        self.area = area
        self.angle_grids = angle_grids

    @property
    def num_stations(self):
        return len(self.stations)

    @cached_property
    def dictionary(self):
        a_blocks = tuple(build_location_dictionary(st, self.area) for st in self.stations)
        b_blocks = tuple(build_angle_dictionary(st, ag)
                         for st, ag in zip(self.stations, self.angle_grids))
        return Dictionary(a_blocks, b_blocks)

    def to_config(self):
        """Canonical configuration dict (broadsides resolved to numbers)."""
        return {
            "stations": [
                {
                    "id": st.station_id,
                    "position": list(st.position),
                    "num_antennas": st.num_antennas,
                    "element_spacing": st.element_spacing,
                    "broadside": st.broadside,
                }
                for st in self.stations
            ],
            "area": {
                "x_min": self.area.x_min, "x_max": self.area.x_max,
                "y_min": self.area.y_min, "y_max": self.area.y_max,
                "grid_x": self.area.grid_x, "grid_y": self.area.grid_y,
            },
            "angles_per_station": [len(ag) for ag in self.angle_grids],
        }

    def fingerprint(self):
        """Hash of the canonical configuration; stable under key reordering."""
        blob = json.dumps(self.to_config(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_config(cls, cfg):
        """Build a scene from a configuration dict (see README for the schema).

        A station with broadside omitted or null points at the area centroid.
        """
        try:
            area_cfg = cfg["area"]
            area = TargetArea(
                x_min=float(area_cfg["x_min"]), x_max=float(area_cfg["x_max"]),
                y_min=float(area_cfg["y_min"]), y_max=float(area_cfg["y_max"]),
                grid_x=int(area_cfg["grid_x"]), grid_y=int(area_cfg["grid_y"]),
            )
            centroid = ((area.x_min + area.x_max) / 2.0, (area.y_min + area.y_max) / 2.0)
            stations = []
            for st in cfg["stations"]:
                bro = st.get("broadside")
                if bro is None:
                    bro = broadside_toward(st["position"], centroid)
                stations.append(BaseStation(
                    station_id=int(st["id"]),
                    position=tuple(st["position"]),
                    num_antennas=int(st["num_antennas"]),
                    broadside=float(bro),
                    element_spacing=float(st.get("element_spacing", 0.5)),
                ))
            angles = cfg.get("angles_per_station", 32)
            if isinstance(angles, int):
                angles = [angles] * len(stations)
            if len(angles) != len(stations):
                raise ConfigError("angles_per_station list must match the number of stations")
            grids = [AngleGrid.uniform(st.station_id, int(c))
                     for st, c in zip(stations, angles)]
        except KeyError as exc:
            raise ConfigError(f"scene config missing key: {exc}") from exc
        return cls(stations, area, grids)
