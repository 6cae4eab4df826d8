"""Command-line front end: ``ehbuffer {dist,outage,sweep,throughput,compare}``.

Each run reads one JSON config, applies flag overrides, validates every physical
parameter and writes CSV and/or JSON files that embed the resolved config.
Exit status: 0 on success, 2 for configuration errors, 3 for numeric or
regime errors.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dist_finite, dist_infinite, outage, simulator
from .eh_model import ConfigError, GammaEHModel, Imperfections, Policy, PolicySpec
from .special_fn import NumericError, RegimeError

SCHEMA = "ehbuffer/1"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class FieldError(ConfigError):
    def __init__(self, path: str, message: str):
        super().__init__(f"field '{path}': {message}")
        self.path = path


# ---------------------------------------------------------------------------
# configuration


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def _get(tree: dict, path: str, default=..., kind=float, positive=False, nonneg=False):
    node = tree
    for key in path.split("."):
        if not isinstance(node, dict) or key not in node:
            if default is ...:
                raise FieldError(path, "is required")
            return default
        node = node[key]
    if node is None and default is not ...:
        return default
    try:
        if kind is int:
            if isinstance(node, bool) or float(node) != int(float(node)):
                raise ValueError
            value = int(float(node))
        elif kind is float:
            if isinstance(node, bool):
                raise ValueError
            value = float(node)
        else:
            value = kind(node)
    except (TypeError, ValueError):
        raise FieldError(path, f"expected {kind.__name__}, got {node!r}") from None
    if kind in (int, float):
        if not math.isfinite(value):
            raise FieldError(path, f"must be finite, got {node!r}")
        if positive and not value > 0:
            raise FieldError(path, f"must be positive, got {node!r}")
        if nonneg and not value >= 0:
            raise FieldError(path, f"must be nonnegative, got {node!r}")
    return value


def _capacity(value, path: str) -> float:
    if value is None or (isinstance(value, str) and value.strip().lower() in ("inf", "infinite", "infinity")):
        return math.inf
    try:
        k = float(value)
    except (TypeError, ValueError):
        raise FieldError(path, f"capacity must be a number or 'inf', got {value!r}") from None
    if not k > 0:
        raise FieldError(path, f"capacity must be positive, got {value!r}")
    return k


def _capacities(tree: dict, path: str, default=...) -> list[float]:
    node = tree
    for key in path.split("."):
        node = node.get(key, ...) if isinstance(node, dict) else ...
        if node is ...:
            break
    if node is ...:
        if default is ...:
            raise FieldError(path, "is required")
        return list(default)
    if not isinstance(node, list) or not node:
        raise FieldError(path, "must be a nonempty list")
    return [_capacity(v, f"{path}[{i}]") for i, v in enumerate(node)]


def _float_list(tree: dict, path: str, default=..., positive=True) -> list[float]:
    node = tree
    for key in path.split("."):
        node = node.get(key, ...) if isinstance(node, dict) else ...
        if node is ...:
            break
    if node is ...:
        if default is ...:
            raise FieldError(path, "is required")
        return list(default)
    if isinstance(node, dict) and {"start", "stop", "num"} <= node.keys():
        node = np.linspace(float(node["start"]), float(node["stop"]), int(node["num"])).tolist()
    if not isinstance(node, list) or not node:
        raise FieldError(path, "must be a nonempty list or {start, stop, num}")
    out = []
    for i, v in enumerate(node):
        try:
            f = float(v)
        except (TypeError, ValueError):
            raise FieldError(f"{path}[{i}]", f"expected a number, got {v!r}") from None
        if not math.isfinite(f) or (positive and not f > 0) or (not positive and f < 0):
            raise FieldError(f"{path}[{i}]", f"out of range: {v!r}")
        out.append(f)
    return out


@dataclass
class RunConfig:
    scenario: str
    eh: GammaEHModel
    imp: Imperfections
    ul: simulator.UplinkChannel
    policies: list[Policy]
    capacities: list[float]
    delta: float
    delta_grid: list[float]
    slots: int
    seed: int
    burn_in: int | None
    bins: int
    sweep_lo: float
    sweep_hi: float
    sweep_points: int
    rates: list[float]
    throughput_points: int
    p_c_list: list[float]
    compare_capacity: float
    workers: int
    out_dir: Path
    fmt: str
    resolved: dict

    @property
    def mean_eff(self) -> float:
        return self.imp.beta * self.eh.mean_x


def resolve_config(raw: dict, overrides: dict | None = None) -> RunConfig:
    """Validate a raw config tree and derive linear-unit quantities."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    tree = copy.deepcopy(raw)
    for path, value in (overrides or {}).items():
        if value is None:
            continue
        node = tree
        keys = path.split(".")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value

    rho = _get(tree, "imperfections.rho", 1.0)
    beta = _get(tree, "imperfections.beta", 1.0)
    p_c = _get(tree, "imperfections.p_c", 0.0, nonneg=True)
    try:
        imp = Imperfections(rho=rho, beta=beta, p_c=p_c)
    except ConfigError as exc:
        raise FieldError("imperfections", str(exc)) from None

    m = _get(tree, "harvest.m", kind=int, positive=True)
    harvest = tree.get("harvest", {})
    # the raw mean wins when both are present, so a resolved config re-runs bit for bit
    if "mean" in harvest:
        mean_raw = _get(tree, "harvest.mean", positive=True)
        if "mean_eff" in harvest:
            eff = _get(tree, "harvest.mean_eff", positive=True)
            if abs(eff - beta * mean_raw) > 1e-9 * eff:
                raise FieldError("harvest.mean_eff", "disagrees with harvest.mean times beta")
    else:
        mean_raw = _get(tree, "harvest.mean_eff", positive=True) / beta
    eh = GammaEHModel(m, mean_raw)

    up = tree.get("uplink")
    if not isinstance(up, dict):
        raise FieldError("uplink", "is required")
    if "sigma2_dbm" in up:
        sigma2 = dbm_to_watts(_get(tree, "uplink.sigma2_dbm"))
        up["sigma2"] = sigma2
    else:
        sigma2 = _get(tree, "uplink.sigma2", positive=True)
    if "omega_ul" in up:
        omega = _get(tree, "uplink.omega_ul", positive=True)
    else:
        ref = _get(tree, "uplink.omega_ref.value", positive=True)
        d_ref = _get(tree, "uplink.omega_ref.distance_m", positive=True)
        d = _get(tree, "uplink.distance_m", positive=True)
        alpha = _get(tree, "uplink.path_loss_exponent", positive=True)
        omega = ref * (d_ref / d) ** alpha
        up["omega_ul"] = omega
    ul = simulator.UplinkChannel(_get(tree, "uplink.m_ul", kind=int, positive=True), omega, sigma2,
                                 _get(tree, "uplink.rate", positive=True))
    up["gamma_thr"] = ul.gamma_thr
    up["Gamma_thr"] = ul.Gamma_thr

    names = tree.get("policies", ["best_effort", "on_off"])
    if not isinstance(names, list) or not names:
        raise FieldError("policies", "must be a nonempty list")
    try:
        policies = [Policy.parse(p) for p in names]
    except ConfigError as exc:
        raise FieldError("policies", str(exc)) from None
    capacities = _capacities(tree, "capacities", [math.inf])
    slots = _get(tree, "simulation.slots", 10 ** 6, kind=int, positive=True)
    burn_in = _get(tree, "simulation.burn_in", None, kind=int, nonneg=True)
    if burn_in is not None and burn_in >= slots:
        raise FieldError("simulation.burn_in", "must be smaller than simulation.slots")
    fmt = _get(tree, "output.format", "both", kind=str)
    if fmt not in ("csv", "json", "both"):
        raise FieldError("output.format", f"must be csv, json or both, got {fmt!r}")
    sweep_lo = _get(tree, "sweep.delta_lo", 0.3, positive=True)
    sweep_hi = _get(tree, "sweep.delta_hi", 4.0, positive=True)
    if not sweep_hi > sweep_lo:
        raise FieldError("sweep.delta_hi", "must exceed sweep.delta_lo")

    cfg = RunConfig(
        scenario=_get(tree, "scenario", "unnamed", kind=str),
        eh=eh, imp=imp, ul=ul, policies=policies, capacities=capacities,
        delta=_get(tree, "delta", 1.5, positive=True),
        delta_grid=_float_list(tree, "outage.delta_grid", [0.8, 1.2, 1.6, 2.0, 2.4, 2.8]),
        slots=slots, seed=_get(tree, "simulation.seed", 0, kind=int, nonneg=True),
        burn_in=burn_in, bins=_get(tree, "simulation.bins", 400, kind=int, positive=True),
        sweep_lo=sweep_lo, sweep_hi=sweep_hi,
        sweep_points=_get(tree, "sweep.points", 200, kind=int, positive=True),
        rates=_float_list(tree, "throughput.rates", [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
        throughput_points=_get(tree, "throughput.points", 60, kind=int, positive=True),
        p_c_list=_float_list(tree, "compare.p_c_list", [p_c], positive=False),
        compare_capacity=_capacity(tree.get("compare", {}).get("capacity", capacities[0]),
                                   "compare.capacity"),
        workers=_get(tree, "workers", 1, kind=int, positive=True),
        out_dir=Path(_get(tree, "output.dir", "out", kind=str)),
        fmt=fmt, resolved=tree)
    tree["harvest"]["mean"] = eh.mean_x
    tree["harvest"]["mean_eff"] = cfg.mean_eff
    tree.setdefault("simulation", {})["seed"] = cfg.seed
    tree["simulation"]["slots"] = cfg.slots
    return cfg


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return resolve_config(raw, overrides)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# output


class Writer:
    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.files: list[Path] = []
        cfg.out_dir.mkdir(parents=True, exist_ok=True)

    def _header(self) -> dict:
        return {"schema": SCHEMA, "command": self.command, "seed": self.cfg.seed,
                "config": self.cfg.resolved}

    def table(self, name: str, rows: list[dict]):
        if self.cfg.fmt in ("csv", "both"):
            path = self.cfg.out_dir / f"{name}.csv"
            buf = io.StringIO()
            buf.write("# " + json.dumps(_clean(self._header())) + "\n")
            if rows:
                cols = list(rows[0].keys())
                for r in rows[1:]:
                    cols += [k for k in r if k not in cols]
                w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
                w.writeheader()
                for r in rows:
                    w.writerow({k: _cell(v) for k, v in r.items()})
            path.write_text(buf.getvalue())
            self.files.append(path)
        if self.cfg.fmt in ("json", "both"):
            self.summary(name, {"rows": rows})

    def summary(self, name: str, payload: dict):
        """Nested results always go to JSON, whatever the table format."""
        path = self.cfg.out_dir / f"{name}.json"
        path.write_text(json.dumps(_clean({**self._header(), **payload}), indent=2))
        self.files.append(path)


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _clean(v):
    """JSON-safe copy: arrays to lists, complex to {re, im}, non-finite floats to strings."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, complex):
        return {"re": _clean(v.real), "im": _clean(v.imag)}
    if v is None or isinstance(v, str):
        return v
    return str(v)


def _k_label(K: float) -> str:
    return "inf" if not math.isfinite(K) else f"{K:.6g}"


def _sim_config(cfg: RunConfig, spec: PolicySpec, seed_offset: int) -> simulator.SimConfig:
    return simulator.SimConfig(spec, cfg.eh, cfg.slots, cfg.burn_in, cfg.seed + seed_offset,
                               cfg.bins)


def _complex_list(values) -> list[dict]:
    return [{"re": float(np.real(v)), "im": float(np.imag(v))} for v in values]


# ---------------------------------------------------------------------------
# commands


def cmd_dist(cfg: RunConfig) -> Writer:
    out = Writer(cfg, "dist")
    curves = []
    for pi, kind in enumerate(cfg.policies):
        for ki, K in enumerate(cfg.capacities):
            spec = outage.spec_for_delta(kind, cfg.delta, cfg.eh, K, cfg.imp)
            dist, params = outage.solve_distribution(spec, cfg.eh, approx_l=True)
            if dist is None:
                raise RegimeError(
                    f"no stationary distribution for an unbounded buffer unless delta > 1 "
                    f"(delta={params.delta_eff:.6g})")
            eh_eff = params.eh_eff()
            t0 = time.perf_counter()
            sim = simulator.run(_sim_config(cfg, spec, 1000 * pi + ki))
            sim_seconds = time.perf_counter() - t0
            edges = sim.bin_edges
            info: dict = {"policy": kind.value, "K": K, "delta_eff": params.delta_eff,
                          "M_eff": params.M_eff, "sim_seed": sim.seed, "sim_slots": sim.slots,
                          "sim_seconds": sim_seconds}
            if math.isfinite(K):
                analytic_bins = dist.bin_masses(edges)
                atom = dist.atom
                res = dist_finite.integral_residual_finite(dist, eh_eff)
                info.update(atom_analytic=atom, atom_sim=sim.empirical_atom,
                            atom_sigma=simulator.binomial_sigma(atom, sim.slots),
                            alpha=dist.alpha, l=dist.l, Delta=dist.Delta, approx_l=dist.approx_l,
                            condition=dist.condition, system_residual=dist.system_residual(),
                            unit_area=dist_finite.total_mass(dist),
                            residual_density=res["density"] / res["scale"],
                            residual_atom=res["atom"])
                tail_analytic = 0.0
            else:
                cdf = dist.cdf(edges)
                analytic_bins = np.diff(cdf)
                atom = 0.0
                tail_analytic = float(1.0 - cdf[-1])
                info.update(roots=_complex_list(dist.roots.roots),
                            coefficients=_complex_list(dist.coeffs),
                            moments=dist.moments, condition=dist.condition,
                            root_residual=float(np.max(dist.roots.residuals())),
                            coefficients_reliable=dist.coeffs_reliable,
                            residual_density=dist_infinite.integral_residual_infinite(dist, eh_eff)
                            / float(np.max(dist.pdf(dist_infinite.default_grid(dist)))),
                            unit_area=dist_infinite.total_mass(dist))
            l1 = (float(np.abs(analytic_bins - sim.bin_masses).sum())
                  + abs(atom - sim.empirical_atom) + abs(tail_analytic - sim.overflow_mass))
            info["l1_distance"] = l1
            widths = np.diff(edges)
            mids = 0.5 * (edges[:-1] + edges[1:])
            rows = []
            for j in range(len(mids)):
                row = {"x_lo": edges[j], "x_hi": edges[j + 1],
                       "pdf_analytic": float(dist.pdf(mids[j])),
                       "bin_pdf_analytic": analytic_bins[j] / widths[j],
                       "bin_pdf_sim": sim.empirical_pdf[j]}
                if math.isfinite(K):
                    row["atom_analytic"] = atom
                    row["atom_sim"] = sim.empirical_atom
                rows.append(row)
            name = f"dist_{kind.value}_K{_k_label(K)}"
            out.table(name, rows)
            curves.append({"name": name, **info})
    out.summary("dist_summary", {"curves": curves})
    return out


def _outage_rows(cfg: RunConfig, kind: Policy, K: float, grid, seed_base: int) -> list[dict]:
    rows = []
    lo, hi = outage.Problem(kind, cfg.eh, cfg.ul, K, cfg.imp).feasible_range(min(grid), max(grid))
    for i, d in enumerate(grid):
        if not lo <= d <= hi:
            # e.g. on-off with fewer than three stripes: no analytical row applies
            rows.append({"policy": kind.value, "K": K, "delta": d, "case": "infeasible"})
            continue
        spec = outage.spec_for_delta(kind, d, cfg.eh, K, cfg.imp)
        rep = outage.evaluate(spec, cfg.eh, cfg.ul)
        sim = simulator.run(_sim_config(cfg, spec, seed_base + i), cfg.ul)
        sigma = simulator.binomial_sigma(rep.p_out, sim.slots)
        rows.append({"policy": kind.value, "K": K, **rep.as_dict(),
                     "p_out_sim": sim.outage_rate, "p_M_sim": sim.p_M_hat, "binomial_sigma": sigma,
                     "z_score": (sim.outage_rate - rep.p_out) / sigma if sigma > 0 else 0.0,
                     "sim_seed": sim.seed})
    return rows


def cmd_outage(cfg: RunConfig) -> Writer:
    out = Writer(cfg, "outage")
    rows = []
    for pi, kind in enumerate(cfg.policies):
        for ki, K in enumerate(cfg.capacities):
            rows += _outage_rows(cfg, kind, K, cfg.delta_grid, 1000 * (10 * pi + ki))
    out.table("outage", rows)
    bl = outage.p_out_bufferless(cfg.eh, cfg.ul, cfg.imp)
    out.summary("outage_summary", {
        "bufferless": {"p_out": bl,
                       "p_out_quadrature": outage.p_out_bufferless_quadrature(cfg.eh, cfg.ul, cfg.imp)},
        "max_abs_z": max((abs(r["z_score"]) for r in rows if "z_score" in r), default=0.0)})
    return out


def _optimize(args):
    problem, lo, hi, points = args
    return outage.optimize_delta(problem, lo, hi, points)


def _map(cfg: RunConfig, fn, items):
    if cfg.workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def cmd_sweep(cfg: RunConfig) -> Writer:
    out = Writer(cfg, "sweep")
    jobs = [(outage.Problem(kind, cfg.eh, cfg.ul, K, cfg.imp), cfg.sweep_lo, cfg.sweep_hi,
             cfg.sweep_points) for kind in cfg.policies for K in cfg.capacities]
    results = _map(cfg, _optimize, jobs)
    rows, optima = [], []
    for (problem, *_), res in zip(jobs, results):
        for d, rep in zip(res.grid, res.grid_reports):
            rows.append({"policy": problem.kind.value, "K": problem.K, **rep.as_dict(),
                         "is_opt": False})
        rows.append({"policy": problem.kind.value, "K": problem.K, **res.report.as_dict(),
                     "is_opt": True})
        optima.append({"policy": problem.kind.value, "K": problem.K, "delta_opt": res.delta_opt,
                       "p_out_opt": res.report.p_out,
                       "feasible_range": list(problem.feasible_range(cfg.sweep_lo, cfg.sweep_hi))})
    out.table("sweep", rows)
    out.summary("sweep_optima", {"optima": optima,
                                 "bufferless_p_out": outage.p_out_bufferless(cfg.eh, cfg.ul, cfg.imp)})
    return out


def _throughput_job(args):
    problem, rates, lo, hi, points = args
    return outage.throughput_sweep(rates, problem, lo, hi, points)


def cmd_throughput(cfg: RunConfig) -> Writer:
    out = Writer(cfg, "throughput")
    jobs = [(outage.Problem(kind, cfg.eh, cfg.ul, K, cfg.imp), cfg.rates, cfg.sweep_lo,
             cfg.sweep_hi, cfg.throughput_points) for kind in cfg.policies for K in cfg.capacities]
    results = _map(cfg, _throughput_job, jobs)
    rows, best = [], []
    for (problem, *_), (table, best_rate) in zip(jobs, results):
        for r in table:
            rows.append({"policy": problem.kind.value, "K": problem.K, "rate": r.rate,
                         "delta_opt": r.delta_opt, "p_out": r.p_out, "throughput": r.throughput})
        best.append({"policy": problem.kind.value, "K": problem.K, "best_rate": best_rate})
    bl = outage.bufferless_throughput(cfg.rates, cfg.eh, cfg.ul, cfg.imp)
    for r in bl:
        rows.append({"policy": "bufferless", "K": 0.0, "rate": r.rate, "delta_opt": math.inf,
                     "p_out": r.p_out, "throughput": r.throughput})
    best.append({"policy": "bufferless", "best_rate": max(bl, key=lambda r: r.throughput).rate})
    out.table("throughput", rows)
    out.summary("throughput_best", {"best": best})
    return out


def compare_policies(cfg: RunConfig, imp: Imperfections, K: float, points: int | None = None):
    """Optimal outage of both policies, the buffer-less baseline and the superiority verdict."""
    points = points or cfg.sweep_points
    be = outage.optimize_delta(outage.Problem(Policy.BEST_EFFORT, cfg.eh, cfg.ul, K, imp),
                               cfg.sweep_lo, cfg.sweep_hi, points)
    oo = outage.optimize_delta(outage.Problem(Policy.ON_OFF, cfg.eh, cfg.ul, K, imp),
                               cfg.sweep_lo, cfg.sweep_hi, points)
    verdict = superiority_on_grid(cfg, imp, K, be, oo)
    return be, oo, outage.p_out_bufferless(cfg.eh, cfg.ul, imp), verdict


def superiority_on_grid(cfg: RunConfig, imp: Imperfections, K: float, be, oo):
    """Evaluate both policies on a shared grid that contains both optima."""
    problems = [outage.Problem(kind, cfg.eh, cfg.ul, K, imp)
                for kind in (Policy.BEST_EFFORT, Policy.ON_OFF)]
    ranges = [p.feasible_range(cfg.sweep_lo, cfg.sweep_hi) for p in problems]
    lo, hi = max(r[0] for r in ranges), min(r[1] for r in ranges)
    base = np.linspace(lo, hi, 40)
    if not math.isfinite(K):
        base = base[(base <= 1.0) | (base >= 1.0 + outage.BOUNDARY_BAND)]
    grid = np.unique(np.concatenate([base, [d for d in (be.delta_opt, oo.delta_opt) if lo <= d <= hi]]))
    be_reps = [problems[0].report(float(d)) for d in grid]
    oo_reps = [problems[1].report(float(d)) for d in grid]
    inputs = [outage.SuperiorityInputs.build(cfg.ul, cfg.eh, imp, d * imp.beta * cfg.eh.mean_x,
                                             rb.sigma_term) for d, rb in zip(grid, be_reps)]
    return outage.superiority_test(be_reps, oo_reps, inputs, infinite=not math.isfinite(K))


def cmd_compare(cfg: RunConfig) -> Writer:
    out = Writer(cfg, "compare")
    rows, verdicts = [], []
    for p_c in cfg.p_c_list:
        imp = Imperfections(rho=cfg.imp.rho, beta=cfg.imp.beta, p_c=p_c)
        be, oo, bl, verdict = compare_policies(cfg, imp, cfg.compare_capacity)
        rows.append({"p_c": p_c, "K": cfg.compare_capacity,
                     "delta_opt_best_effort": be.delta_opt, "p_out_best_effort": be.report.p_out,
                     "delta_opt_on_off": oo.delta_opt, "p_out_on_off": oo.report.p_out,
                     "p_out_bufferless": bl, "on_off_superior": verdict.on_off_superior})
        verdicts.append({"p_c": p_c, **verdict.__dict__})
    out.table("compare", rows)
    out.summary("compare_verdicts", {"verdicts": verdicts})
    return out


COMMANDS = {"dist": cmd_dist, "outage": cmd_outage, "sweep": cmd_sweep,
            "throughput": cmd_throughput, "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ehbuffer", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, help="override simulation.seed")
        p.add_argument("--slots", type=int, help="override simulation.slots")
        p.add_argument("--out", help="override output.dir")
        p.add_argument("--format", choices=["csv", "json", "both"], help="override output.format")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {"simulation.seed": args.seed, "simulation.slots": args.slots,
                 "output.dir": args.out, "output.format": args.format}
    try:
        cfg = load_config(args.config, overrides)
        writer = COMMANDS[args.command](cfg)
    except FileNotFoundError as exc:
        print(f"error: config file not found: {exc.filename}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RegimeError, NumericError, outage.DomainError, dist_finite.DomainError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for path in writer.files:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
