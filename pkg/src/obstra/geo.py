"""Trajectory ingestion, projection, GeoJSON round-trips, evaluation, and
synthetic planted-obstacle scenarios.

Raw tracks arrive as (timestamp, lat, lon) samples; everything downstream
works in planar meters under a local equirectangular projection, so the
plain Euclidean geometry of the distance measure and the meter-valued
buffers are meaningful.  All file formats are deterministic: identical
inputs produce byte-identical outputs.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from shapely import geometry as shpgeo

from .model import GeoPoint, Trajectory

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6371000.0
_DEG = math.pi / 180.0

# fixed reference origin for synthetic corpora (value is arbitrary; it only
# anchors the lat/lon encoding of planar scenarios)
SYNTH_ORIGIN = (1.2903, 103.8520)


# ---------------------------------------------------------------------------
# projection

def project(lat: float, lon: float, origin) -> GeoPoint:
    """Local equirectangular projection, meters east/north of origin."""
    lat0, lon0 = origin
    x = EARTH_RADIUS_M * (lon - lon0) * math.cos(lat0 * _DEG) * _DEG
    y = EARTH_RADIUS_M * (lat - lat0) * _DEG
    return GeoPoint(x, y)


def unproject(x: float, y: float, origin):
    """Inverse of project; returns (lat, lon)."""
    lat0, lon0 = origin
    lat = y / (EARTH_RADIUS_M * _DEG) + lat0
    lon = x / (EARTH_RADIUS_M * math.cos(lat0 * _DEG) * _DEG) + lon0
    return lat, lon


def project_array(lats, lons, origin) -> np.ndarray:
    lat0, lon0 = origin
    x = EARTH_RADIUS_M * (np.asarray(lons) - lon0) * math.cos(lat0 * _DEG) * _DEG
    y = EARTH_RADIUS_M * (np.asarray(lats) - lat0) * _DEG
    return np.column_stack([x, y])


# ---------------------------------------------------------------------------
# ingestion

@dataclass
class RawTrack:
    """One track as sampled: ordered (timestamp_s, lat, lon) triples."""

    id: str
    samples: list


def load_tracks(path) -> list:
    """Parse a trajectory CSV into RawTracks.

    Header `track_id,timestamp,lat,lon`; rows may arrive unsorted and are
    sorted per track; duplicate timestamps within a track are rejected.
    """
    tracks: dict = {}
    with open(path, newline="", encoding="utf-8") as fp:
        reader = csv.reader(fp)
        try:
            header = next(reader)
        except StopIteration:
            return []
        expected = ["track_id", "timestamp", "lat", "lon"]
        if [h.strip() for h in header] != expected:
            raise ValueError(
                f"{path}:1: expected header {','.join(expected)}, "
                f"got {','.join(header)}")
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{ln}: expected 4 fields, got {len(row)}")
            tid = row[0]
            try:
                ts = float(row[1])
                lat = float(row[2])
                lon = float(row[3])
            except ValueError as e:
                raise ValueError(f"{path}:{ln}: {e}") from None
            if not (abs(lat) <= 90.0 and abs(lon) <= 180.0):
                raise ValueError(f"{path}:{ln}: coordinates out of range "
                                 f"({lat}, {lon})")
            tracks.setdefault(tid, []).append((ts, lat, lon))
    out = []
    for tid, samples in tracks.items():
        samples.sort(key=lambda s: s[0])
        for a, b in zip(samples, samples[1:]):
            if a[0] == b[0]:
                raise ValueError(
                    f"{path}: track {tid!r} has duplicate timestamp {a[0]:g}")
        out.append(RawTrack(tid, samples))
    return out


def interpolate(track: RawTrack, interval_s: float, origin,
                max_gap_s: Optional[float] = None) -> list:
    """Resample one track to a uniform time grid in planar coordinates.

    Linear interpolation at t0, t0+d, ... up to the last sample. Gaps wider
    than max_gap_s (default 10x interval) split the track into separately
    named trajectories; pieces with fewer than two grid points are dropped
    with a warning.
    """
    if interval_s <= 0:
        raise ValueError(f"interval_s must be > 0, got {interval_s}")
    if max_gap_s is None:
        max_gap_s = 10.0 * interval_s
    if len(track.samples) < 2:
        log.warning("track %s: only %d sample(s), skipped",
                    track.id, len(track.samples))
        return []
    ts = np.array([s[0] for s in track.samples])
    pts = project_array([s[1] for s in track.samples],
                        [s[2] for s in track.samples], origin)
    # split on oversized gaps
    cuts = np.nonzero(np.diff(ts) > max_gap_s)[0] + 1
    pieces = np.split(np.arange(len(ts)), cuts)
    out = []
    many = len(pieces) > 1
    for j, piece in enumerate(pieces):
        if len(piece) < 2:
            log.warning("track %s: piece %d has a single sample, skipped",
                        track.id, j)
            continue
        t0, t1 = ts[piece[0]], ts[piece[-1]]
        n = int((t1 - t0) // interval_s) + 1
        if n < 2:
            log.warning("track %s: piece %d shorter than one interval, "
                        "skipped", track.id, j)
            continue
        grid = t0 + interval_s * np.arange(n)
        xs = np.interp(grid, ts[piece], pts[piece, 0])
        ys = np.interp(grid, ts[piece], pts[piece, 1])
        tid = f"{track.id}#{j}" if many else track.id
        out.append(Trajectory(tid, np.column_stack([xs, ys])))
    return out


def load_trajectories(path, interval_s: float, origin=None,
                      max_gap_s: Optional[float] = None):
    """CSV to interpolated planar trajectories.

    Origin defaults to the mean coordinate of all samples; it is returned
    so a second corpus can be projected identically.
    """
    tracks = load_tracks(path)
    if origin is None:
        lats = [s[1] for t in tracks for s in t.samples]
        lons = [s[2] for t in tracks for s in t.samples]
        if not lats:
            raise ValueError(f"{path}: no samples")
        origin = (float(np.mean(lats)), float(np.mean(lons)))
    out = []
    for track in tracks:
        out.extend(interpolate(track, interval_s, origin, max_gap_s))
    return out, origin


# ---------------------------------------------------------------------------
# ground truth and detections on disk

@dataclass
class GroundTruthRegion:
    """A known avoided region: planar polygon plus a buffer distance."""

    polygon: list
    enlarge_m: float = 0.0

    def __post_init__(self):
        if len(self.polygon) < 3:
            raise ValueError("ground truth polygon needs >= 3 vertices")

    def shape(self):
        poly = shpgeo.Polygon([(p[0], p[1]) for p in self.polygon])
        if not poly.is_valid:
            raise ValueError("ground truth polygon is not simple")
        # 16-gon disk approximation for the buffer offset
        return poly.buffer(self.enlarge_m, quad_segs=4) if self.enlarge_m > 0 else poly


def _canonical_geojson(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def load_truth(path, origin) -> list:
    """GeoJSON FeatureCollection of Polygons; property enlarge_m, default 2000."""
    with open(path, encoding="utf-8") as fp:
        fc = json.load(fp)
    if fc.get("type") != "FeatureCollection":
        raise ValueError(f"{path}: expected a FeatureCollection")
    out = []
    for i, feat in enumerate(fc.get("features", [])):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Polygon":
            raise ValueError(f"{path}: feature {i} is not a Polygon")
        ring = geom["coordinates"][0]
        if len(ring) > 1 and ring[0] == ring[-1]:
            ring = ring[:-1]
        poly = [project(lat, lon, origin) for lon, lat in ring]
        enlarge = float((feat.get("properties") or {}).get("enlarge_m", 2000.0))
        out.append(GroundTruthRegion(poly, enlarge))
    if not out:
        raise ValueError(f"{path}: no truth polygons")
    return out


def save_truth(regions, path, origin):
    feats = []
    for region in regions:
        ring = [list(unproject(p[0], p[1], origin))[::-1]
                for p in region.polygon]
        ring.append(ring[0])
        feats.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [ring]},
            "properties": {"enlarge_m": region.enlarge_m},
        })
    with open(path, "w", encoding="utf-8") as fp:
        fp.write(_canonical_geojson(
            {"type": "FeatureCollection", "features": feats}))


def _hull_geometry(hull, origin):
    coords = [list(unproject(p[0], p[1], origin))[::-1] for p in hull]
    if len(coords) == 1:
        return {"type": "Point", "coordinates": coords[0]}
    if len(coords) == 2:
        return {"type": "LineString", "coordinates": coords}
    return {"type": "Polygon", "coordinates": [coords + [coords[0]]]}


def export_geojson(result, path, origin) -> None:
    """One hull feature and one last-points MultiPoint feature per obstacle.

    Coordinates go back to [lon, lat]; canonical formatting, so identical
    results produce identical bytes.
    """
    feats = []
    for i, ob in enumerate(result.obstacles):
        feats.append({
            "type": "Feature",
            "geometry": _hull_geometry(ob.hull, origin),
            "properties": {
                "candidates": len(ob.candidate_subs),
                "kind": "hull",
                "mean_heading": [ob.mean_heading[0], ob.mean_heading[1]],
                "obstacle": i,
            },
        })
        feats.append({
            "type": "Feature",
            "geometry": {
                "type": "MultiPoint",
                "coordinates": [list(unproject(p[0], p[1], origin))[::-1]
                                for p in ob.points],
            },
            "properties": {"kind": "last_points", "obstacle": i},
        })
    with open(path, "w", encoding="utf-8") as fp:
        fp.write(_canonical_geojson(
            {"type": "FeatureCollection", "features": feats}))


@dataclass
class LoadedObstacle:
    """Planar view of one exported obstacle, as needed by evaluate()."""

    points: list
    hull: list
    mean_heading: tuple


def load_detections(path, origin) -> list:
    """Rebuild planar obstacles from an exported detection file."""
    with open(path, encoding="utf-8") as fp:
        fc = json.load(fp)
    hulls = {}
    pts = {}
    for feat in fc.get("features", []):
        props = feat.get("properties") or {}
        i = props.get("obstacle")
        geom = feat.get("geometry") or {}
        if props.get("kind") == "hull":
            if geom["type"] == "Point":
                ring = [geom["coordinates"]]
            elif geom["type"] == "LineString":
                ring = geom["coordinates"]
            else:
                ring = geom["coordinates"][0][:-1]
            hulls[i] = ([project(lat, lon, origin) for lon, lat in ring],
                        tuple(props.get("mean_heading", (0.0, 0.0))))
        elif props.get("kind") == "last_points":
            pts[i] = [project(lat, lon, origin)
                      for lon, lat in geom["coordinates"]]
    out = []
    for i in sorted(hulls):
        hull, heading = hulls[i]
        out.append(LoadedObstacle(pts.get(i, hull), hull, heading))
    return out


# ---------------------------------------------------------------------------
# evaluation

@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    precision_undefined: bool = False


def _obstacle_shape(ob):
    if len(ob.hull) == 1:
        return shpgeo.Point(ob.hull[0])
    if len(ob.hull) == 2:
        return shpgeo.LineString([tuple(p) for p in ob.hull])
    return shpgeo.Polygon([tuple(p) for p in ob.hull])


def _matches(ob, truth_shape) -> bool:
    if not (_obstacle_shape(ob).intersects(truth_shape)
            or shpgeo.MultiPoint([tuple(p) for p in ob.points])
            .intersects(truth_shape)):
        return False
    cx = sum(p[0] for p in ob.points) / len(ob.points)
    cy = sum(p[1] for p in ob.points) / len(ob.points)
    tc = truth_shape.centroid
    dot = (ob.mean_heading[0] * (tc.x - cx)
           + ob.mean_heading[1] * (tc.y - cy))
    return dot > 0.0


def evaluate(result, truths) -> EvalReport:
    """Precision / recall / F1 of detected obstacles against ground truth.

    An obstacle matches a truth region when its hull (or any last point)
    intersects the buffered polygon and its mean heading points toward the
    region's centroid (angle < 90 degrees).  Percentages.
    """
    obstacles = result.obstacles if hasattr(result, "obstacles") else result
    if not truths:
        raise ValueError("evaluation needs at least one ground truth region")
    shapes = [t.shape() for t in truths]
    matched_truths = set()
    matched_obstacles = 0
    for ob in obstacles:
        hit = False
        for j, sh in enumerate(shapes):
            if _matches(ob, sh):
                matched_truths.add(j)
                hit = True
        matched_obstacles += bool(hit)
    if not obstacles:
        return EvalReport(0.0, 0.0, 0.0, precision_undefined=True)
    precision = 100.0 * matched_obstacles / len(obstacles)
    recall = 100.0 * len(matched_truths) / len(truths)
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)
    return EvalReport(precision, recall, f1)


# ---------------------------------------------------------------------------
# synthetic planted scenario

@dataclass(frozen=True)
class ScenarioParams:
    """Corridor-with-planted-disk geometry; all lengths in meters."""

    n_reference: int = 50
    n_query: int = 50
    corridor_length_m: float = 4000.0
    point_spacing_m: float = 100.0
    interval_s: float = 60.0
    lane_half_width_m: float = 75.0
    obstacle_center_x_m: float = 2000.0
    obstacle_radius_m: float = 300.0
    detour_clearance_m: float = 50.0
    noise_m: float = 5.0
    two_sided: bool = False
    truth_vertices: int = 32
    truth_enlarge_m: float = 0.0

    def __post_init__(self):
        if self.n_reference < 10 or self.n_query < 10:
            raise ValueError("need at least 10 trajectories per corpus")
        if self.noise_m < 0:
            raise ValueError("noise must be >= 0")
        # widest possible detour: clearance varies up to 3x per trajectory
        detour_r = self.obstacle_radius_m + 3.0 * self.detour_clearance_m
        if self.lane_half_width_m >= self.obstacle_radius_m:
            raise ValueError("lanes wider than the obstacle: reference "
                             "trajectories would miss it")
        lead_in = self.obstacle_center_x_m - detour_r
        lead_out = (self.corridor_length_m - self.obstacle_center_x_m
                    - detour_r)
        if lead_in < 2 * self.point_spacing_m or lead_out < 2 * self.point_spacing_m:
            raise ValueError("obstacle does not fit inside the corridor")


@dataclass
class Scenario:
    reference: list
    query: list
    truth: GroundTruthRegion
    seed: int
    params: ScenarioParams


def _resample(polyline: np.ndarray, spacing: float) -> np.ndarray:
    """Evenly spaced points along the polyline, both endpoints pinned.

    The effective spacing is total/(n-1) with n = floor(total/spacing)+1,
    so every trajectory ends exactly at the path end regardless of how much
    extra length its detour added.
    """
    seg = np.sqrt(np.sum(np.diff(polyline, axis=0) ** 2, axis=1))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    n = int(cum[-1] // spacing) + 1
    grid = np.linspace(0.0, cum[-1], n)
    xs = np.interp(grid, cum, polyline[:, 0])
    ys = np.interp(grid, cum, polyline[:, 1])
    return np.column_stack([xs, ys])


def _detour_polyline(p: ScenarioParams, cy: float, x0: float,
                     side: int, r: float) -> np.ndarray:
    cx = p.obstacle_center_x_m
    dx = math.sqrt(r * r - cy * cy)
    th_in = math.atan2(cy, -dx)
    th_out = math.atan2(cy, dx)
    if side > 0:
        a1 = th_in if th_in >= 0 else th_in + 2 * math.pi
        a2 = th_out
    else:
        a1 = th_in if th_in <= 0 else th_in - 2 * math.pi
        a2 = th_out
    n_arc = max(2, int(abs(a2 - a1) * r / 10.0) + 1)
    ang = np.linspace(a1, a2, n_arc)
    arc = np.column_stack([cx + r * np.cos(ang), r * np.sin(ang)])
    head = np.array([[x0, cy]])
    tail = np.array([[p.corridor_length_m, cy]])
    return np.concatenate([head, arc, tail])


def generate_scenario(params: ScenarioParams = None, seed: int = 42) -> Scenario:
    """Reference lanes run straight through a disk; queries arc around it.

    Deterministic given the seed.  The disk, polygonized, is the ground
    truth.
    """
    p = params or ScenarioParams()
    rng = np.random.default_rng(seed)
    reference = []
    for i in range(p.n_reference):
        cy = rng.uniform(-p.lane_half_width_m, p.lane_half_width_m)
        # random entry offset so sample positions along the corridor are
        # uncorrelated across trajectories, as in organically collected tracks
        x0 = rng.uniform(0.0, p.point_spacing_m)
        line = np.array([[x0, cy], [p.corridor_length_m, cy]])
        pts = _resample(line, p.point_spacing_m)
        pts = pts + rng.normal(0.0, p.noise_m, pts.shape)
        reference.append(Trajectory(f"ref{i:03d}", pts))
    query = []
    for i in range(p.n_query):
        cy = rng.uniform(-p.lane_half_width_m, p.lane_half_width_m)
        x0 = rng.uniform(0.0, p.point_spacing_m)
        # clearance varies per trajectory so the detour arcs spread out
        # radially instead of piling onto one circle
        r = p.obstacle_radius_m + p.detour_clearance_m * rng.uniform(1.0, 3.0)
        side = int(rng.integers(0, 2)) * 2 - 1 if p.two_sided else 1
        pts = _resample(_detour_polyline(p, cy, x0, side, r),
                        p.point_spacing_m)
        pts = pts + rng.normal(0.0, p.noise_m, pts.shape)
        query.append(Trajectory(f"qry{i:03d}", pts))
    ang = 2 * math.pi * np.arange(p.truth_vertices) / p.truth_vertices
    poly = [GeoPoint(p.obstacle_center_x_m + p.obstacle_radius_m * math.cos(a),
                     p.obstacle_radius_m * math.sin(a)) for a in ang]
    truth = GroundTruthRegion(poly, p.truth_enlarge_m)
    return Scenario(reference, query, truth, seed, p)


def _write_tracks_csv(trajectories, path, origin, interval_s: float):
    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp)
        writer.writerow(["track_id", "timestamp", "lat", "lon"])
        for traj in trajectories:
            for j, (x, y) in enumerate(traj.points):
                lat, lon = unproject(float(x), float(y), origin)
                writer.writerow([traj.id, int(j * interval_s),
                                 repr(lat), repr(lon)])


def write_scenario(scenario: Scenario, outdir, origin=SYNTH_ORIGIN) -> dict:
    """Write ref.csv, query.csv and truth.geojson; returns the paths."""
    import os
    os.makedirs(outdir, exist_ok=True)
    paths = {
        "reference": os.path.join(outdir, "ref.csv"),
        "query": os.path.join(outdir, "query.csv"),
        "truth": os.path.join(outdir, "truth.geojson"),
    }
    interval = scenario.params.interval_s
    _write_tracks_csv(scenario.reference, paths["reference"], origin, interval)
    _write_tracks_csv(scenario.query, paths["query"], origin, interval)
    save_truth([scenario.truth], paths["truth"], origin)
    return paths


def save_scenario_spec(scenario: Scenario, outdir) -> str:
    """Persist generator params and seed so the scenario can be regrown
    instead of stored."""
    import os
    from dataclasses import asdict
    path = os.path.join(outdir, "scenario.json")
    doc = {"params": asdict(scenario.params), "seed": scenario.seed}
    with open(path, "w", encoding="utf-8") as fp:
        fp.write(_canonical_geojson(doc))
    return path


def load_scenario_spec(path) -> Scenario:
    """Regenerate the scenario a saved spec describes."""
    with open(path, encoding="utf-8") as fp:
        doc = json.load(fp)
    params = ScenarioParams(**doc["params"])
    return generate_scenario(params, seed=int(doc["seed"]))
