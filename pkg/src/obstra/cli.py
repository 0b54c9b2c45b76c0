"""Command-line surface: index, detect, eval, synth, sweep.

Counts and metrics go to standard output and are deterministic for a given
seed; timing lines go to standard error.  Exit codes: 0 success, 2 bad
usage or unreadable/invalid input, 1 internal fault.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from . import geo
from .density import NORMALIZATION_MODES, DensityParams
from .detector import ALL_OPTIMIZATIONS, Z_MODES, DetectParams, detect
from .knn import CorpusIndex, IndexParams, build_index
from .model import PartitionParams

_DEFAULTS = {
    "window": 6,
    "step": 1,
    "k": 8,
    "sigma": 1.0,
    "tau": 1.645,
    "delta": 1.0,
    "epsilon": 0.0,
    "interval_s": 60.0,
    "z_mode": "pooled",
    "density_mode": "kernel_sum",
    "seed": 0,
    "threads": 1,
    "m": 16,
    "ef_construction": 200,
    "ef_search": 64,
}

_FLAG_BOOLS = ("no_optimizations", "exact_knn", "two_sided")


def _resolve(ns) -> dict:
    """flags > config file > built-in defaults."""
    cfg = {}
    path = getattr(ns, "config", None)
    if path:
        with open(path, encoding="utf-8") as fp:
            cfg = json.load(fp)
        if not isinstance(cfg, dict):
            raise ValueError(f"{path}: config must be a JSON object")
    out = {}
    for name, default in _DEFAULTS.items():
        value = getattr(ns, name, None)
        if value is None:
            value = cfg.get(name, default)
        out[name] = value
    for name in _FLAG_BOOLS:
        out[name] = bool(getattr(ns, name, False)) or bool(cfg.get(name, False))
    return out


def _detect_params(p: dict) -> DetectParams:
    opts = frozenset() if p["no_optimizations"] else ALL_OPTIMIZATIONS
    return DetectParams(tau=float(p["tau"]), delta=float(p["delta"]),
                        k=int(p["k"]), epsilon=float(p["epsilon"]),
                        z_denominator_mode=p["z_mode"],
                        optimizations_enabled=opts)


def _index_params(p: dict) -> IndexParams:
    return IndexParams(k=int(p["k"]), M=int(p["m"]),
                       ef_construction=int(p["ef_construction"]),
                       ef_search=int(p["ef_search"]), seed=int(p["seed"]))


def _echo_params(p: dict, pp: PartitionParams) -> None:
    print(f"params w={pp.w} s={pp.s} k={int(p['k'])}")


# ---------------------------------------------------------------------------
# commands

def cmd_index(ns) -> int:
    p = _resolve(ns)
    pp = PartitionParams(w=int(p["window"]), s=int(p["step"]))
    trajectories, origin = geo.load_trajectories(
        ns.csv, float(p["interval_s"]))
    t0 = time.perf_counter()
    index = build_index(trajectories, pp, _index_params(p),
                        corpus_kind="reference", origin=origin)
    build_s = time.perf_counter() - t0
    index.save(ns.output)
    _echo_params(p, pp)
    print(f"trajectories {len(trajectories)}")
    print(f"windows {len(index)}")
    print(f"index {ns.output}", flush=True)
    print(f"build_time_s {build_s:.3f}", file=sys.stderr)
    return 0


def cmd_detect(ns) -> int:
    p = _resolve(ns)
    ref = CorpusIndex.load(ns.index)
    iparams = _index_params(p)
    trajectories, _ = geo.load_trajectories(
        ns.query_csv, float(p["interval_s"]), origin=ref.origin)
    t0 = time.perf_counter()
    qry = build_index(trajectories, ref.pparams, iparams,
                      precompute_distinct=False, corpus_kind="query",
                      origin=ref.origin)
    index_s = time.perf_counter() - t0
    if len(qry) == 0:
        raise ValueError(f"{ns.query_csv}: no query windows after "
                         f"partitioning")
    dparams = DensityParams(sigma=float(p["sigma"]),
                            normalization_mode=p["density_mode"])
    t0 = time.perf_counter()
    result = detect(ref, qry, _detect_params(p), dparams,
                    exact_knn=p["exact_knn"])
    query_s = time.perf_counter() - t0
    if ns.output:
        geo.export_geojson(result, ns.output, ref.origin)
    _echo_params(p, ref.pparams)
    print(f"obstacles {len(result.obstacles)}")
    print(f"candidates {len(result.candidate_union())}")
    if ns.output:
        print(f"detections {ns.output}")
    sys.stdout.flush()
    print(f"query_index_time_s {index_s:.3f}", file=sys.stderr)
    print(f"query_time_s {query_s:.3f}", file=sys.stderr)
    return 0


def _planar_truth_origin(path):
    with open(path, encoding="utf-8") as fp:
        fc = json.load(fp)
    lats, lons = [], []
    for feat in fc.get("features", []):
        geom = feat.get("geometry") or {}
        if geom.get("type") == "Polygon":
            for lon, lat in geom["coordinates"][0]:
                lats.append(lat)
                lons.append(lon)
    if not lats:
        raise ValueError(f"{path}: no truth polygons")
    return (sum(lats) / len(lats), sum(lons) / len(lons))


def cmd_eval(ns) -> int:
    origin = _planar_truth_origin(ns.truth)
    truths = geo.load_truth(ns.truth, origin)
    detections = geo.load_detections(ns.detections, origin)
    report = geo.evaluate(detections, truths)
    print(f"precision {report.precision:.1f}")
    print(f"recall {report.recall:.1f}")
    print(f"f1 {report.f1:.1f}")
    return 0


def cmd_synth(ns) -> int:
    p = _resolve(ns)
    seed = int(ns.seed) if ns.seed is not None else 42
    params = geo.ScenarioParams(
        n_reference=ns.n_reference, n_query=ns.n_query,
        corridor_length_m=ns.corridor_length,
        point_spacing_m=ns.spacing, interval_s=float(p["interval_s"]),
        lane_half_width_m=ns.lane_half_width,
        obstacle_center_x_m=ns.obstacle_x,
        obstacle_radius_m=ns.obstacle_radius,
        detour_clearance_m=ns.clearance, noise_m=ns.noise,
        two_sided=p["two_sided"])
    scenario = geo.generate_scenario(params, seed=seed)
    paths = geo.write_scenario(scenario, ns.output)
    spec_path = geo.save_scenario_spec(scenario, ns.output)
    print(f"reference {len(scenario.reference)}")
    print(f"query {len(scenario.query)}")
    print(f"truth_vertices {len(scenario.truth.polygon)}")
    for name in ("reference", "query", "truth"):
        print(f"{name}_file {paths[name]}")
    print(f"scenario_file {spec_path}")
    return 0


def _parse_grid(text: str) -> list:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"bad grid {text!r}: expected comma-separated "
                         f"numbers") from None
    if not values:
        raise ValueError(f"bad grid {text!r}: empty")
    return values


def _reframe(points, src_origin, dst_origin):
    return [geo.project(*geo.unproject(p[0], p[1], src_origin), dst_origin)
            for p in points]


def cmd_sweep(ns) -> int:
    p = _resolve(ns)
    taus = _parse_grid(ns.tau_grid)
    deltas = _parse_grid(ns.delta_grid)
    ref = CorpusIndex.load(ns.index)
    trajectories, _ = geo.load_trajectories(
        ns.query_csv, float(p["interval_s"]), origin=ref.origin)
    qry = build_index(trajectories, ref.pparams, _index_params(p),
                      precompute_distinct=False, corpus_kind="query",
                      origin=ref.origin)
    origin = _planar_truth_origin(ns.truth)
    truths = geo.load_truth(ns.truth, origin)
    dparams = DensityParams(sigma=float(p["sigma"]),
                            normalization_mode=p["density_mode"])
    out = open(ns.output, "w", encoding="utf-8") if ns.output else sys.stdout
    try:
        out.write("delta,tau,precision,recall,f1,query_time_s\n")
        for delta in deltas:
            for tau in taus:
                dp = DetectParams(
                    tau=tau, delta=delta, k=int(p["k"]),
                    epsilon=float(p["epsilon"]),
                    z_denominator_mode=p["z_mode"],
                    optimizations_enabled=(frozenset()
                                           if p["no_optimizations"]
                                           else ALL_OPTIMIZATIONS))
                t0 = time.perf_counter()
                result = detect(ref, qry, dp, dparams,
                                exact_knn=p["exact_knn"])
                dt = time.perf_counter() - t0
                # detections live in the reference frame; move them into the
                # truth frame before comparing
                planar = [geo.LoadedObstacle(
                    _reframe(ob.points, ref.origin, origin),
                    _reframe(ob.hull, ref.origin, origin),
                    ob.mean_heading) for ob in result.obstacles]
                report = geo.evaluate(planar, truths)
                out.write(f"{delta:g},{tau:g},{report.precision:.1f},"
                          f"{report.recall:.1f},{report.f1:.1f},{dt:.3f}\n")
        out.flush()
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_shared(sp, *names):
    arg = {
        "window": (("--window",), dict(type=int, metavar="W", help="sub-trajectory width (points)")),
        "step": (("--step",), dict(type=int, metavar="S", help="partition stride (points)")),
        "k": (("--k",), dict(type=int, help="neighbors per kNN list")),
        "sigma": (("--sigma",), dict(type=float, help="Gaussian kernel bandwidth")),
        "tau": (("--tau",), dict(type=float, help="z-score threshold")),
        "delta": (("--delta",), dict(type=float, help="density support threshold")),
        "epsilon": (("--epsilon",), dict(type=float, help="closeness threshold for skip/copy shortcuts")),
        "interval_s": (("--interval-s",), dict(type=float, dest="interval_s", help="resampling interval in seconds")),
        "z_mode": (("--z-mode",), dict(choices=list(Z_MODES), dest="z_mode", help="z denominator form")),
        "density_mode": (("--density-mode",), dict(choices=list(NORMALIZATION_MODES), dest="density_mode", help="density normalization")),
        "no_optimizations": (("--no-optimizations",), dict(action="store_true", dest="no_optimizations", help="disable all search shortcuts")),
        "exact_knn": (("--exact-knn",), dict(action="store_true", dest="exact_knn", help="exhaustive kNN instead of the graph (slow; for verification)")),
        "seed": (("--seed",), dict(type=int, help="RNG seed")),
        "threads": (("--threads",), dict(type=int, help="worker cap (reserved; execution is single-threaded)")),
        "config": (("--config",), dict(help="JSON file of parameter defaults")),
        "m": (("--m",), dict(type=int, help="graph out-degree budget")),
        "ef_construction": (("--ef-construction",), dict(type=int, dest="ef_construction", help="beam width while building the graph")),
        "ef_search": (("--ef-search",), dict(type=int, dest="ef_search", help="beam width while querying the graph")),
    }
    for name in names:
        flags, kw = arg[name]
        sp.add_argument(*flags, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="obstra",
        description="Detect regions that query trajectories avoid but "
                    "reference trajectories pass through.")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("index", help="build and persist a reference index")
    sp.add_argument("csv", help="reference trajectory CSV")
    sp.add_argument("--output", "-o", required=True, help="index file to write")
    _add_shared(sp, "window", "step", "k", "m", "ef_construction",
                "ef_search", "interval_s", "seed", "threads", "config")
    sp.set_defaults(func=cmd_index)

    sp = sub.add_parser("detect", help="find avoided regions for a query corpus")
    sp.add_argument("index", help="reference index file")
    sp.add_argument("query_csv", help="query trajectory CSV")
    sp.add_argument("--output", "-o", help="detections GeoJSON to write")
    _add_shared(sp, "k", "sigma", "tau", "delta", "epsilon", "interval_s",
                "z_mode", "density_mode", "no_optimizations", "exact_knn",
                "m", "ef_construction", "ef_search", "seed", "threads",
                "config")
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("eval", help="score detections against ground truth")
    sp.add_argument("detections", help="detections GeoJSON")
    sp.add_argument("truth", help="ground truth GeoJSON")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("synth", help="generate a planted-obstacle scenario")
    sp.add_argument("--output", "-o", required=True, help="directory for the scenario files")
    sp.add_argument("--n-reference", type=int, default=50)
    sp.add_argument("--n-query", type=int, default=50)
    sp.add_argument("--corridor-length", type=float, default=4000.0)
    sp.add_argument("--spacing", type=float, default=100.0)
    sp.add_argument("--lane-half-width", type=float, default=75.0)
    sp.add_argument("--obstacle-x", type=float, default=2000.0)
    sp.add_argument("--obstacle-radius", type=float, default=300.0)
    sp.add_argument("--clearance", type=float, default=50.0)
    sp.add_argument("--noise", type=float, default=5.0)
    sp.add_argument("--two-sided", action="store_true", dest="two_sided")
    _add_shared(sp, "interval_s", "seed", "threads", "config")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("sweep", help="grid-sweep tau/delta and report metrics")
    sp.add_argument("index", help="reference index file")
    sp.add_argument("query_csv", help="query trajectory CSV")
    sp.add_argument("truth", help="ground truth GeoJSON")
    sp.add_argument("--tau-grid", default="1.282,1.645,1.960,2.326,2.576")
    sp.add_argument("--delta-grid", default="0.5,1.0,1.5,2.0,2.5,3.0,3.5,4.0")
    sp.add_argument("--output", "-o", help="CSV to write (default stdout)")
    _add_shared(sp, "k", "sigma", "epsilon", "interval_s", "z_mode",
                "density_mode", "no_optimizations", "exact_knn", "m",
                "ef_construction", "ef_search", "seed", "threads", "config")
    sp.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except (OSError, ValueError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # pragma: no cover - internal faults
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
