"""Route geometry and case-study airspaces.

Routes are 2D polylines in nautical miles. Intersections (crossings and
merge points) are computed from the polylines, never listed by hand, so the
geometry file only needs waypoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

import numpy as np
import yaml

from safesep.errors import ConfigError

CASE_IDS = ("A", "B", "C", "D")
_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class RouteSpec:
    id: str
    polyline: np.ndarray
    cumlen: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.polyline, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ConfigError(f"route {self.id}: need >= 2 waypoints of shape (n, 2)")
        seg = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(seg <= _EPS):
            raise ConfigError(f"route {self.id}: consecutive waypoints must be distinct")
        pts.setflags(write=False)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        cum.setflags(write=False)
        object.__setattr__(self, "polyline", pts)
        object.__setattr__(self, "cumlen", cum)

    @property
    def entry_point(self) -> np.ndarray:
        return self.polyline[0]

    @property
    def exit_point(self) -> np.ndarray:
        return self.polyline[-1]

    @property
    def length(self) -> float:
        return float(self.cumlen[-1])

    def point_at(self, s):
        """Position(s) at along-track distance ``s`` (scalar or array), clamped to the route."""
        s = np.clip(s, 0.0, self.length)
        x = np.interp(s, self.cumlen, self.polyline[:, 0])
        y = np.interp(s, self.cumlen, self.polyline[:, 1])
        return np.stack([x, y], axis=-1)

    def distance_to(self, point) -> float:
        """Shortest distance from ``point`` to the polyline."""
        p = np.asarray(point, dtype=float)
        a, b = self.polyline[:-1], self.polyline[1:]
        ab = b - a
        t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
        proj = a + t[:, None] * ab
        return float(np.min(np.hypot(*(p - proj).T)))


@dataclass(frozen=True)
class Intersection:
    routes: tuple[str, str]
    along_track: tuple[float, float]
    point: tuple[float, float]


@dataclass(frozen=True)
class Airspace:
    case_id: str
    routes: tuple[RouteSpec, ...]
    intersections: tuple[Intersection, ...]
    width: float = 60.0
    height: float = 60.0

    def route(self, route_id: str) -> RouteSpec:
        for r in self.routes:
            if r.id == route_id:
                return r
        raise KeyError(route_id)

    @property
    def route_ids(self) -> list[str]:
        return [r.id for r in self.routes]

    def nodes(self, route_id: str) -> list[tuple[float, tuple[float, float]]]:
        """Sorted (along_track, point) of every intersection on ``route_id``."""
        out = []
        for ix in self.intersections:
            for rid, s in zip(ix.routes, ix.along_track):
                if rid == route_id:
                    out.append((s, ix.point))
        # a point shared by three routes shows up once per pair
        out.sort()
        dedup: list[tuple[float, tuple[float, float]]] = []
        for s, p in out:
            if not dedup or abs(s - dedup[-1][0]) > 1e-6:
                dedup.append((s, p))
        return dedup


def _segment_hits(p0, p1, q0, q1) -> list[tuple[float, float]]:
    """Parameters (t, u) in [0, 1]^2 where segment p0p1 meets q0q1.

    Collinear overlaps report only the overlap start along p.
    """
    r = p1 - p0
    d = q1 - q0
    denom = r[0] * d[1] - r[1] * d[0]
    w = q0 - p0
    rr = float(r @ r)
    if abs(denom) > _EPS * np.sqrt(rr * float(d @ d)):
        t = (w[0] * d[1] - w[1] * d[0]) / denom
        u = (w[0] * r[1] - w[1] * r[0]) / denom
        if -_EPS <= t <= 1 + _EPS and -_EPS <= u <= 1 + _EPS:
            return [(min(max(t, 0.0), 1.0), min(max(u, 0.0), 1.0))]
        return []
    # parallel: only collinear overlaps matter
    if abs(w[0] * r[1] - w[1] * r[0]) > _EPS * np.sqrt(rr):
        return []
    tq0 = float(w @ r) / rr
    tq1 = float((q1 - p0) @ r) / rr
    lo, hi = max(0.0, min(tq0, tq1)), min(1.0, max(tq0, tq1))
    if lo > hi + _EPS:
        return []
    start = p0 + lo * r
    u = float((start - q0) @ d) / float(d @ d)
    return [(lo, min(max(u, 0.0), 1.0))]


def find_intersections(a: RouteSpec, b: RouteSpec) -> list[Intersection]:
    hits = []
    for i in range(len(a.polyline) - 1):
        p0, p1 = a.polyline[i], a.polyline[i + 1]
        la = a.cumlen[i + 1] - a.cumlen[i]
        for j in range(len(b.polyline) - 1):
            q0, q1 = b.polyline[j], b.polyline[j + 1]
            lb = b.cumlen[j + 1] - b.cumlen[j]
            for t, u in _segment_hits(p0, p1, q0, q1):
                point = p0 + t * (p1 - p0)
                hits.append((float(a.cumlen[i] + t * la), float(b.cumlen[j] + u * lb), point))
    hits.sort(key=lambda h: h[0])
    out: list[Intersection] = []
    for sa, sb, pt in hits:
        if any(np.hypot(*(pt - np.array(o.point))) < 1e-6 for o in out):
            continue
        out.append(Intersection((a.id, b.id), (sa, sb), (float(pt[0]), float(pt[1]))))
    return out


def load_geometry(path=None) -> dict:
    """Read a geometry file; defaults to the copy shipped with the package."""
    if path is None:
        text = resources.files("safesep.data").joinpath("geometry.yaml").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    geometry = yaml.safe_load(text)
    if not isinstance(geometry, dict) or "cases" not in geometry:
        raise ConfigError("geometry config needs a 'cases' mapping")
    return geometry


def build_case(case_id: str, geometry: Mapping | None = None) -> Airspace:
    if geometry is None:
        geometry = load_geometry()
    cases = geometry["cases"]
    if case_id not in CASE_IDS or case_id not in cases:
        raise ConfigError(f"unknown case {case_id!r}")
    sector = geometry.get("sector", {})
    width = float(sector.get("width", 60.0))
    height = float(sector.get("height", 60.0))
    routes = tuple(RouteSpec(str(rid), np.asarray(pts, dtype=float)) for rid, pts in cases[case_id].items())
    if len({r.id for r in routes}) != len(routes):
        raise ConfigError(f"case {case_id}: duplicate route ids")
    for r in routes:
        if np.any(r.polyline < -_EPS) or np.any(r.polyline[:, 0] > width + _EPS) or np.any(r.polyline[:, 1] > height + _EPS):
            raise ConfigError(f"case {case_id}: route {r.id} leaves the sector")
    inters: list[Intersection] = []
    for i, a in enumerate(routes):
        for b in routes[i + 1:]:
            inters.extend(find_intersections(a, b))
    return Airspace(case_id, routes, tuple(inters), width, height)
