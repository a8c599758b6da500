"""Command-line front end: plan, run, train, analyze, witness, selftest."""

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import zlib
from datetime import datetime, timezone

import numpy as np

from . import __version__, numeric
from .approx_coding import (
    BerrutInterpolant,
    approx_decode,
    approx_grid,
    berrut_error_bound,
    berrut_eval,
    chebyshev_second_kind,
    family_deletions,
    lebesgue_constant_estimate,
    max_norm_derivatives,
    well_spaced_constants,
)
from .errors import Infeasible, GradCodeError, NoPlan, NotApplicable
from .exact_coding import (
    default_grid,
    make_scheme,
    recover_aggregate,
    universal_poly,
)
from .matrix_coding import MatrixPoly, eval_matrix_poly, make_matrix_scheme, matrix_feasible
from .numeric import EXACT, FLOAT
from .placement import (
    EXAMPLE_PLACEMENT,
    CostQuery,
    Placement,
    feasibility_check,
    generate_placement,
    optimal_cost,
    partial_sum_plan,
    replication,
)
from .simulator import (
    All,
    Count,
    Deadline,
    Deterministic,
    GaussianNoise,
    Replace,
    ShiftedExponential,
    SignFlipScale,
    TrainConfig,
    WorkerProfile,
    centralized_gd,
    make_regression,
    simulate_round,
    train_gd,
)
from .verify import exhaustive_witness_search, converse_witness, oracle_aggregate, roundtrip_check
from .verify import vandermonde_condition

EXIT_CONFIG = 2
EXIT_DECODE = 3

SECTIONS = {
    "placement": {"n_workers", "n_partitions", "gamma", "generate"},
    "scheme": {"s", "a", "d", "m", "mode", "budget", "h", "gradients", "matrices"},
    "workers": {"latency", "adversaries", "corruption", "cutoff"},
    "train": {"samples", "d_feat", "eta", "iterations", "mode", "noise"},
}


class ConfigError(Exception):
    pass


# -- config ---------------------------------------------------------------


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return validate_config(doc)


def validate_config(doc):
    for key, value in doc.items():
        if key not in SECTIONS:
            raise ConfigError(f"unknown section {key!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"section {key!r} must be an object")
        unknown = set(value) - SECTIONS[key]
        if unknown:
            raise ConfigError(f"unknown key(s) {sorted(unknown)} in section {key!r}")
    if "placement" not in doc:
        raise ConfigError("missing section 'placement'")
    return doc


def sub_seed(root, name):
    """Independent named sub-stream of the root seed."""
    return int(np.random.SeedSequence([root, zlib.crc32(name.encode())]).generate_state(1)[0])


def build_placement(section, seed):
    if "generate" in section:
        g = section["generate"]
        try:
            return generate_placement(g["N"], g["K"], g["r"], g.get("kind", "uniform"),
                                      g.get("seed", sub_seed(seed, "placement")))
        except KeyError as exc:
            raise ConfigError(f"placement.generate is missing field {exc.args[0]!r}") from None
    try:
        return Placement.from_dict(section)
    except GradCodeError as exc:
        raise ConfigError(f"placement: {exc}") from None


def scheme_section(doc):
    sc = dict(doc.get("scheme", {}))
    sc.setdefault("s", 0)
    sc.setdefault("a", 0)
    sc.setdefault("d", 4)
    sc.setdefault("mode", EXACT)
    if sc["mode"] not in (EXACT, FLOAT):
        raise ConfigError(f"scheme.mode must be 'exact' or 'float', got {sc['mode']!r}")
    for key in ("s", "a", "d"):
        if not isinstance(sc[key], int) or sc[key] < 0:
            raise ConfigError(f"scheme.{key} must be a non-negative integer")
    return sc


def _latency(doc):
    kind = doc.get("kind", "deterministic")
    if kind == "deterministic":
        return Deterministic(float(doc.get("t", 1.0)))
    if kind == "shifted_exponential":
        return ShiftedExponential(float(doc.get("shift", 1.0)), float(doc.get("rate", 1.0)))
    raise ConfigError(f"unknown latency kind {kind!r}")


def build_profiles(doc, N):
    w = doc.get("workers", {})
    lat = w.get("latency", {"kind": "shifted_exponential", "shift": 1.0, "rate": 1.0})
    models = [_latency(x) for x in lat] if isinstance(lat, list) else [_latency(lat)] * N
    if len(models) != N:
        raise ConfigError(f"workers.latency lists {len(models)} models for {N} workers")
    adv = set(w.get("adversaries", []))
    return [WorkerProfile(models[n - 1], n in adv) for n in range(1, N + 1)]


def build_corruption(doc):
    c = doc.get("workers", {}).get("corruption", {"kind": "sign_flip_scale", "c": -2})
    kind = c.get("kind")
    if kind == "sign_flip_scale":
        return SignFlipScale(c.get("c", -2))
    if kind == "gaussian":
        return GaussianNoise(float(c.get("sigma", 1.0)))
    if kind == "replace":
        return Replace(tuple(c["vector"]))
    raise ConfigError(f"unknown corruption kind {kind!r}")


def build_cutoff(doc, default):
    c = doc.get("workers", {}).get("cutoff")
    if c is None:
        return default
    kind = c.get("kind")
    if kind == "count":
        return Count(int(c["k"]))
    if kind == "deadline":
        return Deadline(float(c["t"]))
    if kind == "all":
        return All()
    raise ConfigError(f"unknown cutoff kind {kind!r}")


def read_gradients(spec, mode):
    """Gradients from an inline JSON array or from a .csv / .json file path."""
    if isinstance(spec, str):
        with open(spec) as fh:
            if spec.endswith(".csv"):
                rows = [r for r in csv.reader(fh) if r]
            else:
                rows = json.load(fh)
    else:
        rows = spec
    return numeric.asarray(rows, mode) if mode == FLOAT else numeric.asarray(
        [[str(v) if isinstance(v, float) else v for v in row] for row in rows], EXACT)


# -- output helpers ---------------------------------------------------------


def csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, numeric.Fraction):
        return numeric.fraction_str(v)
    return v


def write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, numeric.Fraction):
        return numeric.fraction_str(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _vec(v, mode):
    return [numeric.scalar_to_json(x, mode) for x in np.ravel(v)]


def now_iso():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return t.replace(microsecond=0).isoformat()


def manifest(command, config, seed, mode, timestamp=None):
    return {
        "artifact_version": __version__,
        "command": command,
        "config": config,
        "mode": mode,
        "seed": seed,
        "timestamp": timestamp or now_iso(),
    }


# -- plan -------------------------------------------------------------------


def plan(doc, seed=0):
    """Planner table computed entirely by library calls."""
    p = build_placement(doc["placement"], seed)
    sc = scheme_section(doc)
    s, a, d = sc["s"], sc["a"], sc["d"]
    out = {"N": p.n_workers, "K": p.n_partitions, "r": replication(p), "s": s, "a": a, "d": d}
    try:
        cost = optimal_cost(p, CostQuery(s, a, d))
        out.update(cost=cost.symbolic(), cost_value=str(cost.cost), m=cost.m, share_length=cost.share_length)
    except Infeasible as exc:
        out.update(cost=None, cost_value=None, m=None, share_length=None,
                   limiting_partition=exc.limiting_partition)
    feas = feasibility_check(p, s, a)
    out["feasible"] = {"full": "yes", "partial": "partial", "infeasible": "no"}[feas.verdict]
    out["recoverable"] = list(feas.recoverable)
    if sc.get("budget") is not None:
        try:
            pl = partial_sum_plan(p, s, a, sc["budget"], d)
            out["partial_sum"] = {"j": pl.j, "partitions": list(pl.partitions), "m": pl.m, "cost": str(pl.cost)}
        except NoPlan:
            out["partial_sum"] = None
    deg_h = len(sc["h"]) - 1 if sc.get("h") else 2
    try:
        r_min, ok = matrix_feasible(p.n_workers, s, a, deg_h, p)
        out["matrix"] = {"deg_h": deg_h, "r_min": r_min, "feasible": ok}
    except Infeasible:
        out["matrix"] = {"deg_h": deg_h, "r_min": None, "feasible": False}
    return out


def format_plan(out):
    lines = []
    head = f"C*={out['cost']}" if out["cost"] else "C*=n/a"
    lines.append(f"{head}, m={out['m'] if out['m'] else 'n/a'}, feasible={out['feasible']}")
    order = ["N", "K", "r", "s", "a", "d", "cost_value", "share_length", "recoverable",
             "limiting_partition", "partial_sum", "matrix"]
    width = max(len(k) for k in order)
    for key in order:
        if key in out:
            lines.append(f"  {key:<{width}}  {json.dumps(out[key], default=str)}")
    return "\n".join(lines) + "\n"


# -- run --------------------------------------------------------------------


def _vector_gradients(sc, K, mode, seed):
    if sc.get("gradients") is not None:
        return read_gradients(sc["gradients"], mode)
    rng = np.random.default_rng(sub_seed(seed, "data"))
    if mode == EXACT:
        return numeric.asarray(rng.integers(-20, 21, size=(K, sc["d"])).tolist(), EXACT)
    return rng.normal(size=(K, sc["d"]))


def run(doc, seed, mode, timestamp=None):
    """Execute one round; returns {filename: text} and an optional failure flag."""
    p = build_placement(doc["placement"], seed)
    sc = scheme_section(doc)
    N = p.n_workers
    profiles = build_profiles(doc, N)
    corruption = build_corruption(doc)
    latency_seed = sub_seed(seed, "latency")
    files = {}
    if mode == "matrix":
        result, round_rows = _run_matrix(doc, sc, p, profiles, corruption, seed, latency_seed)
    elif mode == "approx":
        result, round_rows, sweep = _run_approx(doc, sc, p, profiles, seed, latency_seed)
        files["sweep.csv"] = csv_text(["n", "s1", "lambda_estimate", "lambda_bound", "emp_error", "bound"], sweep)
    else:
        result, round_rows = _run_exact(doc, sc, p, profiles, corruption, seed, latency_seed)
    files["result.json"] = dump_json(result)
    files["round.csv"] = csv_text(["worker", "alpha", "latency", "responded", "adversarial", "flagged"], round_rows)
    files["manifest.json"] = dump_json(manifest("run", doc, seed, mode, timestamp))
    return files, result.get("status") == "decode_failure"


def _round_rows(outcome, alphas, profiles, flagged):
    rows = []
    for n, prof in enumerate(profiles, start=1):
        rows.append([n, alphas[n - 1], outcome.latencies[n], int(n in outcome.responded),
                     int(prof.adversarial), int(n in flagged)])
    return rows


def _failure(outcome, exc, mode):
    return {
        "status": "decode_failure",
        "error": repr(exc),
        "responders": outcome.responded,
        "shares": [sh.to_dict() for sh in outcome.shares],
        "mode": mode,
    }


def _run_exact(doc, sc, p, profiles, corruption, seed, latency_seed):
    mode = sc["mode"]
    scheme = make_scheme(p, s=sc["s"], a=sc["a"], mode=mode, m=sc.get("m"))
    grads = _vector_gradients(sc, p.n_partitions, mode, seed)
    cutoff = build_cutoff(doc, Count(p.n_workers - sc["s"]))
    outcome = simulate_round(p, scheme, grads, profiles, cutoff, latency_seed, corruption=corruption)
    try:
        agg, flagged = scheme.aggregate(outcome.shares, grads.shape[1])
    except GradCodeError as exc:
        return _failure(outcome, exc, "exact"), _round_rows(outcome, scheme.grid.alphas, profiles, set())
    truth = oracle_aggregate(grads)
    if mode == EXACT:
        match = bool(np.all(agg == truth))
        err = 0.0 if match else None
    else:
        err = float(np.max(np.abs(agg - truth)))
        match = err <= 1e-8 * max(1.0, float(np.max(np.abs(truth))))
    result = {
        "status": "ok", "mode": "exact", "arithmetic": mode,
        "aggregate": _vec(agg, mode), "oracle": _vec(truth, mode), "matches_oracle": match,
        "max_abs_error": err, "responders": outcome.responded, "flagged": sorted(flagged),
        "m": scheme.m, "share_length": int(outcome.shares[0].payload.size) if outcome.shares else 0,
    }
    return result, _round_rows(outcome, scheme.grid.alphas, profiles, flagged)


def _approx_scheme(sc, p):
    d = sc["d"]
    m = sc.get("m") or (max(1, d // sc["budget"]) if sc.get("budget") else 1)
    return make_scheme(p, s=sc["s"], a=0, mode=FLOAT, m=m, grid=approx_grid(p.n_workers, m), strict=False)


def _run_approx(doc, sc, p, profiles, seed, latency_seed):
    if any(prof.adversarial for prof in profiles):
        raise ConfigError("approximate mode assumes no adversarial workers")
    scheme = _approx_scheme(sc, p)
    grads = _vector_gradients(sc, p.n_partitions, FLOAT, seed)
    grads = np.asarray(grads, dtype=float)
    d = grads.shape[1]
    N = p.n_workers
    cutoff = build_cutoff(doc, Count(N - sc["s"]))
    outcome = simulate_round(p, scheme, grads, profiles, cutoff, latency_seed)
    truth = oracle_aggregate(grads)
    agg = approx_decode(outcome.shares, scheme.grid.betas, d)
    f = universal_poly(p, scheme.grid, scheme.slice(grads))
    f1, f2 = max_norm_derivatives(f)
    result = {
        "status": "ok", "mode": "approx", "arithmetic": FLOAT, "m": scheme.m,
        "aggregate": _vec(agg, FLOAT), "oracle": _vec(truth, FLOAT),
        "max_abs_error": float(np.max(np.abs(agg - truth))),
        "responders": outcome.responded, "flagged": [],
    }
    # sweep the number of realized stragglers using the arrival order of this round
    order = sorted(outcome.latencies, key=lambda n: (outcome.latencies[n], n))
    all_shares = scheme.encode_all(scheme.slice(grads))
    sweep = []
    xs = np.linspace(-1.0, 1.0, 2000)
    for stragglers in range(0, 7):
        n_nodes = N - stragglers
        s1 = family_deletions(N, n_nodes)
        if n_nodes < 3 or s1 >= N - 2:
            break
        live = [all_shares[n - 1] for n in order[:n_nodes]]
        interp = BerrutInterpolant.fit([sh.alpha for sh in live], [sh.payload for sh in live])
        emp = float(np.max(np.abs(berrut_eval(interp, xs) - np.array([f(x) for x in xs], dtype=float))))
        quality = well_spaced_constants(interp.nodes)
        bound = berrut_error_bound(N, s1, f1, f2).bound
        sweep.append([n_nodes, s1, quality.lebesgue_estimate, quality.lebesgue_bound, emp, bound])
    return result, _round_rows(outcome, scheme.grid.alphas, profiles, set()), sweep


def _run_matrix(doc, sc, p, profiles, corruption, seed, latency_seed):
    mode = sc["mode"]
    rng = np.random.default_rng(sub_seed(seed, "data"))
    d = sc["d"]
    h = MatrixPoly(tuple(sc.get("h") or [0, 0, 1]))
    scheme = make_matrix_scheme(p, h, s=sc["s"], a=sc["a"], mode=mode)
    if sc.get("matrices") is not None:
        mats = [numeric.asarray(m, mode) for m in sc["matrices"]]
    elif mode == EXACT:
        mats = [numeric.asarray(rng.integers(-5, 6, size=(d, d)).tolist(), EXACT) for _ in range(p.n_partitions)]
    else:
        mats = [rng.normal(size=(d, d)) for _ in range(p.n_partitions)]
    cutoff = build_cutoff(doc, Count(p.n_workers - sc["s"]))
    outcome = simulate_round(p, scheme, mats, profiles, cutoff, latency_seed, corruption=corruption)
    try:
        value, flagged = scheme.evaluate(outcome.shares)
    except GradCodeError as exc:
        return _failure(outcome, exc, "matrix"), _round_rows(outcome, scheme.alphas, profiles, set())
    truth = eval_matrix_poly(scheme.h, oracle_aggregate(mats))
    match = bool(np.all(value == truth)) if mode == EXACT else bool(np.allclose(value, truth))
    result = {
        "status": "ok", "mode": "matrix", "arithmetic": mode, "d": d,
        "aggregate": _vec(value, mode), "oracle": _vec(truth, mode), "matches_oracle": match,
        "responders": outcome.responded, "flagged": sorted(flagged),
    }
    return result, _round_rows(outcome, scheme.alphas, profiles, flagged)


# -- train ------------------------------------------------------------------


def train(doc, seed, timestamp=None):
    p = build_placement(doc["placement"], seed)
    sc = scheme_section(doc)
    tr = doc.get("train", {})
    tmode = tr.get("mode", "exact")
    N, K = p.n_workers, p.n_partitions
    d_feat = int(tr.get("d_feat", 8))
    samples = int(tr.get("samples", 10 * K))
    exact = tmode == "exact" and sc["mode"] == EXACT
    X, y = make_regression(samples, d_feat, sub_seed(seed, "data"), noise=float(tr.get("noise", 0.1)), exact=exact)
    eta = numeric.to_scalar(tr.get("eta", "1/16" if exact else 0.05), EXACT if exact else FLOAT)
    cfg = TrainConfig(X, y, K, eta, int(tr.get("iterations", 20 if exact else 200)), tmode)
    profiles = build_profiles(doc, N)
    if tmode == "approx":
        scheme = _approx_scheme(dict(sc, d=d_feat), p)
    else:
        scheme = make_scheme(p, s=sc["s"], a=sc["a"], mode=sc["mode"], m=sc.get("m"))
    cutoff = build_cutoff(doc, Count(N - sc["s"]))
    res = train_gd(cfg, p, scheme, profiles, sub_seed(seed, "latency"), cutoff=cutoff,
                   corruption=build_corruption(doc))
    ref = centralized_gd(cfg)
    rows = [[r["iter"], float(r["loss"]), r["responders"], r["decoder"], r["bound"]] for r in res.log]
    summary = {
        "final_loss": float(res.losses[-1]),
        "centralized_final_loss": float(ref.losses[-1]),
        "iterations": cfg.iterations,
        "mode": tmode,
        "max_weight_deviation": float(max(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
                                          for a, b in zip(res.weights, ref.weights))),
    }
    files = {
        "train.csv": csv_text(["iter", "loss", "responders", "decoder", "bound"], rows),
        "result.json": dump_json(summary),
        "manifest.json": dump_json(manifest("train", doc, seed, tmode, timestamp)),
    }
    return files


# -- analyze ------------------------------------------------------------------


def analyze(kind, ns, s1_values, oracle, seed):
    if kind == "lebesgue":
        rows = []
        for n in ns:
            nodes = chebyshev_second_kind(n)
            q = well_spaced_constants(nodes)
            rows.append([n, 0, q.lebesgue_estimate, q.lebesgue_bound, "", ""])
        return ["n", "s1", "lambda_estimate", "lambda_bound", "emp_error", "bound"], rows
    if kind == "condition":
        rows = []
        for n in ns:
            rows.append([n, vandermonde_condition(np.arange(1, n + 1)),
                         vandermonde_condition(np.cos((2 * np.arange(1, n + 1) - 1) * np.pi / (2 * n)))])
        return ["n", "equispaced", "chebyshev"], rows
    if kind == "bounds":
        rows = []
        rng = np.random.default_rng(sub_seed(seed, "analyze"))
        for N in ns:
            coeffs = np.zeros((4, 1)) if oracle == "zero" else rng.normal(size=(4, 1))
            if oracle == "zero":
                coeffs[0, 0] = 1.0
            f1, f2 = max_norm_derivatives(coeffs)
            fam = chebyshev_second_kind(N)
            xs = np.linspace(-1, 1, 2000)
            truth = np.polynomial.polynomial.polyval(xs, coeffs[:, 0])
            for s1 in s1_values:
                if s1 >= N - 2:
                    continue
                keep = np.sort(rng.choice(N + 1, N + 1 - s1, replace=False))
                nodes = fam[keep]
                vals = np.polynomial.polynomial.polyval(nodes, coeffs[:, 0])[:, None]
                interp = BerrutInterpolant.fit(nodes, vals)
                emp = float(np.max(np.abs(berrut_eval(interp, xs)[:, 0] - truth)))
                q = well_spaced_constants(interp.nodes)
                rows.append([N, s1, q.lebesgue_estimate, q.lebesgue_bound, emp,
                             berrut_error_bound(N, s1, f1, f2).bound])
        return ["n", "s1", "lambda_estimate", "lambda_bound", "emp_error", "bound"], rows
    raise ConfigError(f"unknown analysis kind {kind!r}")


# -- selftest --------------------------------------------------------------------


def selftest():
    checks = []
    scheme = make_scheme(EXAMPLE_PLACEMENT, s=1)
    from .exact_coding import share_coefficients
    w3 = share_coefficients(3, EXAMPLE_PLACEMENT, scheme.grid)
    checks.append(("example worker 3 share", w3 == {1: [1, numeric.Fraction(-3, 5)]}))
    rep = roundtrip_check(EXAMPLE_PLACEMENT, scheme, seed=0, exhaustive=True)
    checks.append(("example exhaustive round trip", rep.ok and rep.passed == 6))
    adv = make_scheme(generate_placement(6, 4, 5, "uniform", 1), s=1, a=1)
    checks.append(("adversary round trip", roundtrip_check(adv.placement, adv, seed=1, exhaustive=True).ok))
    checks.append(("witness on r = 2a+s", exhaustive_witness_search(
        Placement.from_sets([{1, 2}, {1, 2}, {2}]), 0, 1) is not None))
    nodes = chebyshev_second_kind(16)
    q = well_spaced_constants(nodes)
    checks.append(("lebesgue bound", q.lebesgue_estimate <= q.lebesgue_bound))
    return checks


# -- entry point --------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="gradcode", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", metavar="PATH", help="JSON config document")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.add_argument("--out", metavar="DIR", help="output directory")
        return p

    common(sub.add_parser("plan", help="cost, feasibility and fallback plan"))
    r = common(sub.add_parser("run", help="simulate one coded round"))
    r.add_argument("--mode", choices=["exact", "approx", "matrix"], default="exact")
    r.add_argument("--replay", metavar="MANIFEST", help="re-run a saved manifest")
    t = common(sub.add_parser("train", help="coded gradient descent on least squares"))
    t.add_argument("--replay", metavar="MANIFEST", help="re-run a saved manifest")
    a = common(sub.add_parser("analyze", help="interpolation analytics tables"), config=False)
    a.add_argument("kind", help="lebesgue | condition | bounds")
    a.add_argument("--n", type=int, nargs="+", default=[8, 16, 32])
    a.add_argument("--s1", type=int, nargs="+", default=[0, 1, 2, 3])
    a.add_argument("--oracle", choices=["poly", "zero"], default="poly")
    common(sub.add_parser("witness", help="converse witness for an under-replicated placement"))
    common(sub.add_parser("selftest", help="quick end-to-end checks"), config=False)
    return ap


def _emit_files(files, out_dir):
    if out_dir is None:
        return
    for name, text in files.items():
        write_atomic(os.path.join(out_dir, name), text)


def _load_for(args):
    if getattr(args, "replay", None):
        with open(args.replay) as fh:
            man = json.load(fh)
        return validate_config(man["config"]), man["seed"], man.get("mode"), man["timestamp"]
    if not args.config:
        raise ConfigError("--config is required")
    return load_config(args.config), args.seed, None, None


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"gradcode: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GradCodeError as exc:
        # violated preconditions (infeasible placement, float mode with adversaries, ...)
        print(f"gradcode: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _dispatch(args):
    cmd = args.command
    if cmd == "plan":
        doc = load_config(args.config) if args.config else None
        if doc is None:
            raise ConfigError("--config is required")
        out = plan(doc, args.seed)
        text = dump_json(out) if args.json else format_plan(out)
        sys.stdout.write(text)
        _emit_files({"plan.json": dump_json(out)}, args.out)
        return 0
    if cmd == "run":
        doc, seed, mode, ts = _load_for(args)
        mode = mode or args.mode
        files, failed = run(doc, seed, mode, ts)
        _emit_files(files, args.out)
        sys.stdout.write(files["result.json"] if args.json or args.out is None else
                         f"wrote {', '.join(sorted(files))} to {args.out}\n")
        return EXIT_DECODE if failed else 0
    if cmd == "train":
        doc, seed, _, ts = _load_for(args)
        files = train(doc, seed, ts)
        _emit_files(files, args.out)
        sys.stdout.write(files["result.json"] if args.json or args.out is None else
                         f"wrote {', '.join(sorted(files))} to {args.out}\n")
        return 0
    if cmd == "analyze":
        header, rows = analyze(args.kind, args.n, args.s1, args.oracle, args.seed)
        if args.json:
            sys.stdout.write(dump_json([dict(zip(header, r)) for r in rows]))
        else:
            sys.stdout.write(csv_text(header, rows))
        _emit_files({f"analyze_{args.kind}.csv": csv_text(header, rows)}, args.out)
        return 0
    if cmd == "witness":
        doc = load_config(args.config) if args.config else None
        if doc is None:
            raise ConfigError("--config is required")
        p = build_placement(doc["placement"], args.seed)
        sc = scheme_section(doc)
        try:
            w = converse_witness(p, sc["s"], sc["a"])
            out = {"applicable": True, "identical_stacks": w.delivered_bytes(0) == w.delivered_bytes(1),
                   "witness": w.to_dict()}
        except NotApplicable as exc:
            out = {"applicable": False, "reason": str(exc)}
        text = dump_json(out)
        sys.stdout.write(text if args.json else
                         (f"witness: partition {out['witness']['partition']}, stragglers "
                          f"{out['witness']['stragglers']}, identical={out['identical_stacks']}\n"
                          if out["applicable"] else f"not applicable: {out['reason']}\n"))
        _emit_files({"witness.json": text}, args.out)
        return 0
    if cmd == "selftest":
        checks = selftest()
        if args.json:
            sys.stdout.write(dump_json({name: ok for name, ok in checks}))
        else:
            for name, ok in checks:
                sys.stdout.write(f"{'PASS' if ok else 'FAIL'}  {name}\n")
        return 0 if all(ok for _, ok in checks) else 1
    raise ConfigError(f"unknown command {cmd!r}")


if __name__ == "__main__":
    sys.exit(main())
