"""Command-line entry point: analyze, cusp-orbit, attractor, verify.

Exit codes: 2 spec parse error, 3 map not postcritically finite, 4
precondition violation, 5 verification failure.  JSON reports are
deterministic: keys sorted, rationals as strings, floats with 17 significant
digits.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import random
import sys
import time
from fractions import Fraction

import click
from mpmath import mpc, mpf

from . import __version__
from .cover import lambda_value, set_precision
from .errors import CurvePullError, NotEventuallyPeriodic
from .farey import (
    Cusp, Horoball, ModularElement, gamma2_class, horoball_contains,
    horoball_map, horoballs_disjoint,
)
from .oracle_topo import calibrate_convention, comparison_table
from .pullback import (
    build_evaluator, classify_cusp, cusp_pullback, find_attractor, halfplane_svg,
    iterate_cusp_orbit, orbit_csv, sigma_eval,
)
from .ratmap import (
    INF, MarkedMap, decompose_statically_reducible, dynamical_portrait,
    is_statically_reducible, map_from_spec, pt_label, signature_2222,
    static_portrait,
)

EXIT_PARSE = 2
EXIT_NOT_PCF = 3
EXIT_PRECONDITION = 4
EXIT_VERIFY = 5


# ---------------------------------------------------------------------------
# serialization


def _jsonable(value):
    """Deterministic JSON form: rationals as strings, floats at 17 digits."""
    if isinstance(value, Fraction):
        return str(value.numerator) if value.denominator == 1 else str(value)
    if isinstance(value, (Cusp,)):
        return str(value)
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, int):
        return value
    if isinstance(value, (float, mpf)):
        return format(float(value), ".17g")
    if isinstance(value, (complex, mpc)):
        z = complex(value)
        return [format(z.real, ".17g"), format(z.imag, ".17g")]
    if value is INF:
        return "inf"
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in sorted(value.items(), key=lambda kv: str(kv[0]))}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return str(value)


def _dump_json(data) -> str:
    return json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n"


def _emit(ctx_out, name: str, text: str):
    if ctx_out:
        os.makedirs(ctx_out, exist_ok=True)
        path = os.path.join(ctx_out, name)
        with open(path, "w") as fh:
            fh.write(text)
        click.echo(f"wrote {path}")
    else:
        click.echo(text, nl=False)


# ---------------------------------------------------------------------------
# spec loading


def _load_spec(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"spec parse error: {exc}", err=True)
        sys.exit(EXIT_PARSE)


def _marked_map(spec: dict) -> MarkedMap:
    try:
        return map_from_spec(spec)
    except NotEventuallyPeriodic:
        click.echo("map is not postcritically finite", err=True)
        sys.exit(EXIT_NOT_PCF)
    except (KeyError, ValueError, ZeroDivisionError) as exc:
        click.echo(f"spec parse error: {exc}", err=True)
        sys.exit(EXIT_PARSE)


def _evaluator(mm: MarkedMap, t: Fraction, depth: int):
    try:
        return build_evaluator(mm.f, mm.A, t=t, depth=depth)
    except NotEventuallyPeriodic:
        click.echo("map is not postcritically finite", err=True)
        sys.exit(EXIT_NOT_PCF)
    except (ValueError, CurvePullError) as exc:
        click.echo(f"precondition violation: {exc}", err=True)
        sys.exit(EXIT_PRECONDITION)


def _input_hash(spec: dict) -> str:
    return hashlib.sha256(json.dumps(spec, sort_keys=True).encode()).hexdigest()[:16]


def _run_report(spec: dict, started: float, results: dict, ev=None) -> dict:
    report = {
        "version": __version__,
        "input_hash": _input_hash(spec),
        "results": results,
        "elapsed_seconds": time.time() - started,
    }
    if ev is not None and ev.tau0 is not None:
        report["tau0"] = ev.tau0
    return report


def _parse_fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        click.echo(f"cannot parse rational: {text}", err=True)
        sys.exit(EXIT_PARSE)


def common_options(func):
    func = click.option("--spec", "spec_path", required=True,
                        type=click.Path(), help="Map spec JSON file.")(func)
    func = click.option("--t", "t_text", default="1/2",
                        help="Horoball family parameter t.")(func)
    func = click.option("--depth", default=8, type=int,
                        help="Radial depth of the cusp schedule.")(func)
    func = click.option("--precision", default=None, type=int,
                        help="Working precision in bits (CURVEPULL_PRECISION overrides).")(func)
    func = click.option("--seed", default=0, type=int, help="RNG seed.")(func)
    func = click.option("--jobs", default=1, type=int,
                        help="Parallel workers for cusp searches.")(func)
    func = click.option("--format", "fmt", default="json",
                        type=click.Choice(["json", "csv", "dot", "svg"]),
                        help="Output format.")(func)
    func = click.option("--out", "out_dir", default=None,
                        type=click.Path(), help="Write reports under this directory.")(func)
    return func


def _apply_precision(precision):
    if os.environ.get("CURVEPULL_PRECISION"):
        set_precision()
    elif precision is not None:
        set_precision(precision)


@click.group()
@click.version_option(version=__version__)
def main():
    """Curve-pullback dynamics of rational Thurston maps with 4 marked points."""


# ---------------------------------------------------------------------------
# analyze


@main.command()
@common_options
def analyze(spec_path, t_text, depth, precision, seed, jobs, fmt, out_dir):
    """Portraits, postcritical classification, static reducibility."""
    _apply_precision(precision)
    started = time.time()
    spec = _load_spec(spec_path)
    mm = _marked_map(spec)
    f = mm.f
    try:
        dyn = dynamical_portrait(f, mm.A)
        stat = static_portrait(f, mm.A)
        cls = f.classify_fatou_julia()
        a_trivial = is_statically_reducible(f, mm.A)
    except NotEventuallyPeriodic:
        click.echo("map is not postcritically finite", err=True)
        sys.exit(EXIT_NOT_PCF)
    results = {
        "name": mm.name,
        "degree": f.degree,
        "postcritical": [pt_label(p) for p in mm.postcritical],
        "classification": {pt: cls.labels[pt] for pt in cls.labels},
        "cycle_data": {pt: list(cls.cycle_data[pt]) for pt in cls.cycle_data},
        "dynamical_portrait": sorted(dyn.edges),
        "static_portrait": sorted(stat.edges),
        "lattes_signature_2222": signature_2222(f),
        "statically_reducible": a_trivial is not None,
    }
    if a_trivial is not None:
        m, g = decompose_statically_reducible(f, mm.A)
        results["statically_trivial_point"] = a_trivial
        results["decomposition"] = {
            "moebius_num": list(m.num), "moebius_den": list(m.den),
            "g_num": list(g.num), "g_den": list(g.den),
            "note": ("f = M o g with M a marked-set involution; the curve "
                     "attractor of f is finite exactly when that of g is, "
                     "so analyze the unmarked core map g"),
        }
    if fmt == "dot":
        _emit(out_dir, "portrait.dot", dyn.to_dot())
        return
    _emit(out_dir, "analyze.json", _dump_json(_run_report(spec, started, results)))


# ---------------------------------------------------------------------------
# cusp-orbit


@main.command("cusp-orbit")
@common_options
@click.option("--cusp", "cusp_text", required=True, help="Start cusp, e.g. 1/3 or inf.")
@click.option("--max-iter", default=100, type=int, help="Orbit iteration cap.")
def cusp_orbit(spec_path, t_text, depth, precision, seed, jobs, fmt, out_dir,
               cusp_text, max_iter):
    """Iterate the pullback orbit of one cusp."""
    _apply_precision(precision)
    started = time.time()
    spec = _load_spec(spec_path)
    mm = _marked_map(spec)
    try:
        r = Cusp.parse(cusp_text)
    except (ValueError, TypeError):
        click.echo(f"cannot parse cusp: {cusp_text}", err=True)
        sys.exit(EXIT_PARSE)
    ev = _evaluator(mm, _parse_fraction(t_text), depth)
    record = iterate_cusp_orbit(ev, r, max_iter)
    if fmt == "csv":
        _emit(out_dir, "orbit.csv", orbit_csv(record))
        return
    if fmt == "svg":
        pts = []
        for c in record.cusps:
            if not c.is_infinity:
                pts.append((c.p / c.q, 0.05))
        _emit(out_dir, "orbit.svg", halfplane_svg(pts, ev.t))
        return
    results = {"orbit": record.to_json_dict(),
               "classes": [classify_cusp(ev, c) for c in record.cusps]}
    _emit(out_dir, "orbit.json", _dump_json(_run_report(spec, started, results, ev)))


# ---------------------------------------------------------------------------
# attractor


@main.command()
@common_options
@click.option("--height", default=30, type=int, help="Cusp height bound (max 200).")
@click.option("--max-iter", default=100, type=int, help="Orbit iteration cap.")
def attractor(spec_path, t_text, depth, precision, seed, jobs, fmt, out_dir,
              height, max_iter):
    """Search all cusps up to a height bound for the finite attractor."""
    _apply_precision(precision)
    if height > 200:
        click.echo("precondition violation: height bound exceeds 200", err=True)
        sys.exit(EXIT_PRECONDITION)
    started = time.time()
    spec = _load_spec(spec_path)
    mm = _marked_map(spec)
    ev = _evaluator(mm, _parse_fraction(t_text), depth)
    if jobs > 1:
        _prewarm_parallel(ev, height, max_iter, jobs, spec)
    report = find_attractor(ev, height, max_iter)
    julia_peripheral = sum(
        1 for r, rec in report.orbits.items()
        if classify_cusp(ev, r) == "Julia" and rec.terminal == "peripheral")
    results = {
        "attractor": [str(c) for c in report.attractor],
        "closure_ok": report.closure_ok,
        "closure_detail": {str(k): v for k, v in report.closure_detail.items()},
        "undecided": [str(c) for c in report.undecided],
        "height": report.height,
        "seed": seed,
        "settings": report.settings,
        "n_orbits": len(report.orbits),
        "terminal_counts": _terminal_counts(report),
        "julia_peripheral": julia_peripheral,
    }
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["cusp", "terminal", "steps", "cycle"])
        for r in sorted(report.orbits, key=str):
            rec = report.orbits[r]
            writer.writerow([str(r), rec.terminal, len(rec.fates),
                             " ".join(str(c) for c in rec.cycle)])
        _emit(out_dir, "attractor.csv", buf.getvalue())
        return
    _emit(out_dir, "attractor.json", _dump_json(_run_report(spec, started, results, ev)))
    summary = (f"attractor {{{', '.join(str(c) for c in report.attractor)}}} "
               f"closure={'pass' if report.closure_ok else 'FAIL'} "
               f"undecided={len(report.undecided)}")
    click.echo(summary, err=True)


def _terminal_counts(report):
    counts = {}
    for rec in report.orbits.values():
        counts[rec.terminal] = counts.get(rec.terminal, 0) + 1
    return counts


_WORKER_EV = None


def _worker_init(spec, t_text, depth):
    global _WORKER_EV
    mm = map_from_spec(spec)
    _WORKER_EV = build_evaluator(mm.f, mm.A, t=Fraction(t_text), depth=depth)


def _worker_fate(r):
    fate = cusp_pullback(_WORKER_EV, r)
    return r, fate


def _prewarm_parallel(ev, height, max_iter, jobs, spec):
    """Fill the evaluator's fate cache with a parallel map over the seed cusps.

    Orbit iteration afterwards hits the cache for every first step; the merge
    is deterministic because results are keyed by cusp.
    """
    import multiprocessing as mp_pool
    from .pullback import cusps_of_height, self_cache
    ctx = mp_pool.get_context("spawn")
    cusps = cusps_of_height(height)
    with ctx.Pool(jobs, initializer=_worker_init,
                  initargs=(spec, str(ev.t), ev.depth)) as pool:
        for r, fate in pool.map(_worker_fate, cusps):
            self_cache(ev)[(r, ev.t, ev.depth)] = fate


# ---------------------------------------------------------------------------
# verify


@main.command()
@common_options
def verify(spec_path, t_text, depth, precision, seed, jobs, fmt, out_dir):
    """Run the property suites and print a pass/fail matrix."""
    _apply_precision(precision)
    started = time.time()
    spec = _load_spec(spec_path)
    mm = _marked_map(spec)
    rng = random.Random(seed)
    suites = {}

    # exact horoball laws: equivariance and disjointness samples
    ok = True
    for _ in range(200):
        m = _random_modular(rng)
        ball = Horoball(Cusp(rng.randint(-9, 9), rng.randint(0, 9) or 1),
                        Fraction(rng.randint(1, 9), 10))
        x = Fraction(rng.randint(-50, 50), rng.randint(1, 20))
        y = Fraction(rng.randint(1, 60), rng.randint(1, 20))
        x2, y2 = m.apply_tau(x, y)
        if horoball_contains(ball, x, y) != horoball_contains(horoball_map(m, ball), x2, y2):
            ok = False
            break
    suites["horoball_equivariance"] = ok
    t_dis = Fraction(9, 10)
    pairs_ok = True
    cusps = [Cusp(p, q) for q in range(0, 16)
             for p in range(-15, 16) if q == 0 or math.gcd(p, q) == 1][:200]
    for i, b1 in enumerate(cusps):
        for b2 in cusps[i + 1:]:
            if not horoballs_disjoint(Horoball(b1, t_dis), Horoball(b2, t_dis)):
                pairs_ok = False
    suites["horoball_disjointness"] = pairs_ok

    ev = _evaluator(mm, _parse_fraction(t_text), depth)
    if not ev.constant:
        worst = 0.0
        for _ in range(10):
            tau = mpc(rng.uniform(-0.9, 0.9), rng.uniform(0.4, 1.8))
            s = sigma_eval(ev, tau)
            res = abs(mpc(complex(ev.f(complex(lambda_value(s))))) - lambda_value(tau))
            worst = max(worst, float(res))
        suites["semiconjugacy"] = worst < 1e-6

        sorting_ok = True
        for r in [Cusp(0, 1), Cusp(1, 1), Cusp(2, 1), Cusp(1, 3), Cusp(2, 3)]:
            fate = cusp_pullback(ev, r)
            if fate.kind == "essential" and gamma2_class(fate.target) != gamma2_class(r):
                sorting_ok = False
        suites["cusp_sorting"] = sorting_ok

        conv = calibrate_convention()
        table = comparison_table(ev, [Cusp(0, 1), Cusp(1, 1), Cusp(1, 0),
                                      Cusp(2, 1), Cusp(1, 3)], conv)
        suites["oracle_agreement"] = all(
            row.endswith("True") for row in table.strip().splitlines()[1:])
    else:
        suites["semiconjugacy"] = True
        suites["cusp_sorting"] = True
        suites["oracle_agreement"] = True

    results = {"suites": suites, "seed": seed}
    _emit(out_dir, "verify.json", _dump_json(_run_report(spec, started, results, ev)))
    for name in sorted(suites):
        click.echo(f"{name:26s} {'pass' if suites[name] else 'FAIL'}", err=True)
    if not all(suites.values()):
        sys.exit(EXIT_VERIFY)


def _random_modular(rng) -> ModularElement:
    m = ModularElement(1, 0, 0, 1)
    gens = [ModularElement(1, 1, 0, 1), ModularElement(0, -1, 1, 0)]
    for _ in range(rng.randint(1, 12)):
        m = m * rng.choice(gens)
    return m


if __name__ == "__main__":
    main()
