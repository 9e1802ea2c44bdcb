"""Command-line interface.

    compactmarkov classify  --chain bd.json --state 0
    compactmarkov tightness --chain bd.json --epsilon 0.5
    compactmarkov bounds    --chain funnel.json --set 0 --epsilon 0.25
    compactmarkov simulate  --chain funnel.json --set 0 --seed 1
    compactmarkov series    --chain bd.json --state 0 --order 200
    compactmarkov replay    out/report.json

The JSON report goes to ``<out>/report.json`` (stdout without ``--out``), a
short human-readable summary goes to stderr, CSV tables are written next to
the report. Exit status: 0 when the analysis ran (whatever the verdict),
1 when a bound that must hold on a certified chain was violated, 2 on
invalid input.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import bounds as bnd
from .chain import DEFAULT_POLICY, Kernel, TruncationPolicy, load_chain, make_chain
from .classify import Thresholds, classify
from .errors import MarkovError
from .montecarlo import estimate_return_time, hitting_time_samples, occupation_fraction, simulate_path
from .passage import f_series_from_g, first_return_probs, green_series
from .series import TruncatedSeries, write_csv
from .tightness import (
    DEFAULT_BUDGET,
    DEFAULT_EPSILON_GRID,
    TightnessCertificate,
    compactness_verdict,
    find_tight_set,
    n_step_tail_check,
    tail_sup,
)

COMMANDS = ("classify", "tightness", "bounds", "simulate", "series")


@dataclass
class RunConfig:
    command: str
    chain_spec: dict
    chain_path: str | None = None
    out: str | None = None
    state: int = 0
    target: int | None = None
    order: int = 512
    max_order: int = 8192
    epsilon: float | None = None
    budget: int = DEFAULT_BUDGET
    set: list[int] | None = None
    nmax: int = 50
    z: float | None = None
    trials: int = 10_000
    steps: int = 100_000
    cap: int = 1_000
    seed: int = 0
    max_states: int = DEFAULT_POLICY.max_states
    mass_floor: float = DEFAULT_POLICY.mass_floor

    def validate(self):
        if self.command not in COMMANDS:
            raise MarkovError(f"unknown command {self.command!r}")
        for name in ("order", "max_order", "budget", "nmax", "trials", "cap", "max_states"):
            if getattr(self, name) < 1:
                raise MarkovError(f"--{name.replace('_', '-')} must be >= 1")
        if self.steps < 1:
            raise MarkovError("--steps must be >= 1")
        if self.epsilon is not None and not 0.0 < self.epsilon < 1.0:
            raise MarkovError("--epsilon must lie in (0, 1)")
        if self.z is not None and not 0.0 <= self.z < 1.0:
            raise MarkovError("--z must lie in [0, 1)")
        if self.seed < 0:
            raise MarkovError("--seed must be non-negative")
        if self.out is not None:
            Path(self.out).mkdir(parents=True, exist_ok=True)


def _finite(obj):
    """JSON-safe copy: non-finite floats become None, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _certify(k: Kernel, A, eps: float, budget: int) -> TightnessCertificate | None:
    ts = tail_sup(k, A, budget)
    if ts.exhaustive and ts.value < eps:
        return TightnessCertificate(tuple(A), eps, ts.value, True, k.state_count or budget)
    return None


def _run_classify(cfg, k, policy, out):
    rep = classify(k, cfg.state, cfg.order, policy, Thresholds(max_order=max(cfg.max_order, cfg.order)))
    summary = f"{k.name} state {cfg.state}: {rep.verdict.value}, F(x,x|1) >= {rep.F1_estimate:.10g}"
    if rep.tau_converged:
        summary += f", mean return time {rep.tau_estimate:.10g}"
    return 0, {"classification": rep.to_dict()}, summary


def _run_tightness(cfg, k, policy, out):
    report: dict = {}
    if cfg.set:
        ts = tail_sup(k, cfg.set, cfg.budget)
        report["tail_sup"] = {"A": cfg.set, "value": ts.value, "exhaustive": ts.exhaustive}
        summary = f"tail sup for A={cfg.set}: {ts.value:.10g} ({'certified' if ts.exhaustive else 'explored only'})"
        if cfg.epsilon is not None:
            cert = _certify(k, cfg.set, cfg.epsilon, cfg.budget)
            report["certified"] = cert is not None
            if cert is not None:
                checks = n_step_tail_check(k, cfg.set, cfg.epsilon, cfg.nmax, policy, cfg.budget)
                report["n_step"] = [c._asdict() for c in checks]
                if not all(c.passed for c in checks):
                    return 1, report, summary + "; n-step tail check FAILED"
                summary += f"; n-step tails below {cfg.epsilon:g} for n <= {cfg.nmax}"
        return 0, report, summary
    if cfg.epsilon is not None:
        search = find_tight_set(k, cfg.epsilon, cfg.budget)
        report["search"] = search.to_dict()
        if search.found:
            summary = f"eps={cfg.epsilon:g}: tight set A={list(search.certificate.A)} with tail {search.best_tail:.10g}"
        else:
            summary = f"eps={cfg.epsilon:g}: not found ({'refuted' if search.refuted else 'inconclusive'}): {search.reason}"
        return 0, report, summary
    verdict = compactness_verdict(k, DEFAULT_EPSILON_GRID, cfg.budget)
    report["compactness"] = verdict.to_dict()
    return 0, report, verdict.verdict


def _run_bounds(cfg, k, policy, out):
    if cfg.epsilon is None:
        raise MarkovError("bounds needs --epsilon")
    if cfg.set:
        A = list(cfg.set)
    else:
        search = find_tight_set(k, cfg.epsilon, cfg.budget)
        if not search.found:
            return 0, {"certified": False, "search": search.to_dict()}, f"no certified set at eps={cfg.epsilon:g}"
        A = list(search.certificate.A)
    cert = _certify(k, A, cfg.epsilon, cfg.budget)
    if cert is None:
        ts = tail_sup(k, A, cfg.budget)
        return 0, {"certified": False, "tail_sup": ts.value}, f"A={A} is not certified at eps={cfg.epsilon:g}"
    checks = bnd.check_certified_bounds(k, cert, cfg.nmax, cfg.order, policy, cfg.budget)
    report = {"certified": True, "certificate": cert.to_dict(), "checks": [c.to_dict() for c in checks]}

    x = cfg.state if cfg.state in A or not A else A[0]
    m = bnd.compute_reversibility_measure(k, policy=policy)
    if m is not None:
        sweep = bnd.reversible_lower_bound_sweep(k, m, [x], [A], min(cfg.nmax, 25), policy)
        bad = [c for c in sweep if not c.passed]
        checks.append(
            bnd.BoundCheck("reversible_p2n", float(len(bad)), "==", 0.0, "pass" if not bad else "fail",
                           f"{len(sweep)} cases, x = {x}")
        )
        if cfg.z is not None:
            g = bnd.green_lower_bound(k, m, A, x, cfg.z, cfg.order, policy)
            checks.append(bnd.BoundCheck("green_lower", g.lhs, ">=", g.rhs, g.status, f"z = {cfg.z:g}, eps = {g.eps:.6g}"))
        report["checks"] = [c.to_dict() for c in checks]
    report["reversible"] = m is not None

    if out is not None:
        _write_rows(out / "bounds.csv", ["name", "lhs", "relation", "rhs", "status"],
                    [[c.name, repr(c.lhs), c.relation, repr(c.rhs), c.status] for c in checks])
    lines = [f"{c.name:16s} {c.lhs:.10g} {c.relation} {c.rhs:.10g}  {c.status}" for c in checks]
    failed = any(c.status == "fail" for c in checks)
    return (1 if failed else 0), report, "\n".join(lines)


def _run_simulate(cfg, k, policy, out):
    A = list(cfg.set) if cfg.set else [cfg.state]
    rt = estimate_return_time(k, cfg.state, cfg.trials, cfg.cap, cfg.seed, policy)
    occ = occupation_fraction(k, A, cfg.state, cfg.steps, cfg.seed)
    cert = _certify(k, A, cfg.epsilon, cfg.budget) if cfg.epsilon is not None else None
    curve = hitting_time_samples(k, A, cfg.state, cfg.trials, cfg.cap, cfg.seed, cert, policy)
    report = {
        "return_time": rt.to_dict(),
        "occupation": dict(occ.to_dict(), A=A),
        "hitting_mean": curve.mean().to_dict(),
        "certified": cert is not None,
    }
    status = 0
    if cert is not None:
        ok = bool(curve.passed.all())
        occ_ok = occ.mean >= 1.0 - cert.epsilon - 3.0 * occ.sigma
        report["survival_bound_ok"] = ok
        report["occupation_bound_ok"] = occ_ok
        status = 0 if ok and occ_ok else 1
    if out is not None:
        n = np.arange(1, cfg.cap + 1)
        bound = curve.bound if curve.bound is not None else np.full(cfg.cap, np.nan)
        _write_rows(out / "survival.csv", ["n", "survival", "sigma", "bound"],
                    zip(n.tolist(), curve.survival.tolist(), curve.sigma.tolist(), bound.tolist()))
        path = simulate_path(k, cfg.state, cfg.steps, cfg.seed)
        running = np.cumsum(np.isin(path.states[1:], A)) / np.arange(1, cfg.steps + 1)
        marks = np.unique(np.geomspace(1, cfg.steps, num=min(cfg.steps, 200)).astype(int))
        _write_rows(out / "occupation.csv", ["step", "fraction"], [[int(s), repr(float(running[s - 1]))] for s in marks])
    summary = (
        f"return time to {cfg.state}: {rt.estimate.mean:.6g} +/- {rt.estimate.half_width:.3g} "
        f"({rt.censored} censored); occupation of {A}: {occ.mean:.6g} +/- {occ.half_width:.3g}"
    )
    return status, report, summary


def _run_series(cfg, k, policy, out):
    y = cfg.state if cfg.target is None else cfg.target
    f = first_return_probs(k, cfg.state, y, cfg.order, policy)
    Gxy = green_series(k, cfg.state, y, cfg.order, policy)
    Gyy = Gxy if y == cfg.state else green_series(k, y, y, cfg.order, policy)
    F = f.as_series()
    F_div = f_series_from_g(Gxy, Gyy, y == cfg.state)
    columns = {"f": F, "p": Gxy, "f_from_g": F_div}
    gap = float(np.abs(F.coeffs - F_div.coeffs).max())
    report = {"source": cfg.state, "target": y, "order": cfg.order, "F_at_1": f.total,
              "defect": f.defect, "max_route_gap": gap}
    if out is not None:
        write_csv(out / "series.csv", columns)
    else:
        report["f"] = F.coeffs.tolist()
        report["p"] = Gxy.coeffs.tolist()
    return 0, report, f"F({cfg.state},{y}|1) >= {f.total:.10g}; taboo vs division routes differ by {gap:.3g}"


RUNNERS = {
    "classify": _run_classify,
    "tightness": _run_tightness,
    "bounds": _run_bounds,
    "simulate": _run_simulate,
    "series": _run_series,
}


def run(cfg: RunConfig) -> tuple[int, dict]:
    """Execute one analysis; returns the exit status and the JSON report."""
    cfg.validate()
    k = make_chain(cfg.chain_spec)
    policy = TruncationPolicy(cfg.max_states, cfg.mass_floor)
    out = Path(cfg.out) if cfg.out is not None else None
    status, body, summary = RUNNERS[cfg.command](cfg, k, policy, out)
    report = _finite({"command": cfg.command, "chain": k.name, "status": status, "summary": summary,
                      "result": body, "config": asdict(cfg)})
    if out is not None:
        with open(out / "report.json", "w") as fh:
            json.dump(report, fh, indent=2)
    return status, report


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated state indices, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty set")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compactmarkov", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--chain", required=True, help="chain spec (JSON)")
    common.add_argument("--out", help="output directory for report.json and CSV files")
    common.add_argument("--state", type=int, default=0)
    common.add_argument("--order", type=int, default=512, help="series order N")
    common.add_argument("--max-states", type=int, default=DEFAULT_POLICY.max_states)
    common.add_argument("--mass-floor", type=float, default=DEFAULT_POLICY.mass_floor)
    common.add_argument("--budget", type=int, default=DEFAULT_BUDGET)

    p = sub.add_parser("classify", parents=[common], help="recurrence classification of a state")
    p.add_argument("--max-order", type=int, default=8192)

    p = sub.add_parser("tightness", parents=[common], help="finite-set tightness criterion")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--set", type=_int_list)
    p.add_argument("--nmax", type=int, default=20)

    p = sub.add_parser("bounds", parents=[common], help="return/hitting-time and reversible bounds")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--set", type=_int_list)
    p.add_argument("--nmax", type=int, default=50)
    p.add_argument("--z", type=float)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo return, hitting and occupation")
    p.add_argument("--set", type=_int_list)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--cap", type=int, default=1_000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("series", parents=[common], help="f^(n) and p^(n) coefficients as CSV")
    p.add_argument("--target", type=int)

    p = sub.add_parser("replay", help="re-run the configuration embedded in a report")
    p.add_argument("report")
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "replay":
            with open(args.report) as fh:
                saved = json.load(fh)["config"]
            saved["out"] = args.out
            cfg = RunConfig(**saved)
        else:
            opts = {k: v for k, v in vars(args).items() if k != "chain" and k in RunConfig.__dataclass_fields__}
            k = load_chain(args.chain)
            cfg = RunConfig(chain_spec=k.spec, chain_path=args.chain, **opts)
        status, report = run(cfg)
    except (MarkovError, OSError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(report["summary"], file=sys.stderr)
    if cfg.out is None:
        json.dump(report, sys.stdout, indent=2)
        sys.stdout.write("\n")
    return status


if __name__ == "__main__":
    sys.exit(main())
