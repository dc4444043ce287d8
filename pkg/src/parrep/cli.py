"""Seeded experiment runner.

Every experiment is a per-trial function returning flat records plus an
aggregation that names its bound checks.  Trial t draws from
default_rng([seed, t]), so trial subsets do not change with --trials.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from importlib import metadata

import numpy as np

EXPERIMENTS = ("repeat_sweep", "extract_nonuniform", "extract_uniform", "compress_check",
               "public_coin_check", "counterexample", "xor_sweep", "selftest")
COMMANDS = {"repeat-sweep": "repeat_sweep", "extract": "extract_nonuniform",
            "extract-uniform": "extract_uniform", "compress": "compress_check",
            "public-coin": "public_coin_check", "counterexample": "counterexample", "xor": "xor_sweep",
            "selftest": "selftest"}
NEEDS_SEED = set(EXPERIMENTS) - {"counterexample", "selftest"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int | None = None
    dim: int = 2
    k: int = 3
    delta: float = 0.8
    mu: float = 0.05
    epsilon: float = 0.1
    trials: int = 10
    out: str | None = None
    format: str = "json"
    workers: int = 1

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.experiment in NEEDS_SEED and self.seed is None:
            raise ConfigError("--seed is required for sampling experiments")
        if self.seed is not None and not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not 1 <= self.dim <= 16:
            raise ConfigError("dim must lie in 1..16")
        if not 1 <= self.k <= 8:
            raise ConfigError("k must lie in 1..8")
        if self.experiment == "counterexample" and self.k < 2:
            raise ConfigError("counterexample needs k >= 2")
        if not 0 < self.delta <= 1:
            raise ConfigError("delta must lie in (0, 1]")
        if not 0 < self.mu < 0.5:
            raise ConfigError("mu must lie in (0, 1/2)")
        if not 0 <= self.epsilon < 1:
            raise ConfigError("epsilon must lie in [0, 1)")
        if self.trials < 1:
            raise ConfigError("trials must be positive")
        if self.format not in ("json", "csv"):
            raise ConfigError("format must be json or csv")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        return self


@dataclass
class RunReport:
    config: dict
    records: list
    aggregate: dict
    checks: dict
    passed: bool
    wall_clock: float
    version: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_plain)

    def to_csv(self) -> str:
        cols = []
        for r in self.records:
            cols += [c for c in r if c not in cols]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in self.records:
            w.writerow({c: _cell(r.get(c)) for c in cols})
        return buf.getvalue()


def _plain(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _cell(v):
    if isinstance(v, (list, tuple)):
        return json.dumps(list(v), default=_plain)
    return "" if v is None else _plain(v) if isinstance(v, (np.floating, np.integer)) else v


def version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0.1.0"


def trial_rng(seed: int | None, t: int) -> np.random.Generator:
    return np.random.default_rng([seed or 0, t])


# ---------------------------------------------------------------------------
# per-trial experiments


def _repeat_sweep(cfg: ExperimentConfig, t: int) -> list[dict]:
    from .instances import dial_adversary, dial_protocol
    from .protocol import execute, parallel_repeat, product_adversary, random_adversary, random_instance

    rng = trial_rng(cfg.seed, t)
    if t % 2 == 0:
        p = random_instance(rng, msg_dim=cfg.dim, work_dim=2)
        a = random_adversary(p, rng, mem_dim=2)
        kind = "random"
    else:
        p = dial_protocol(cfg.dim, 1, rng)
        a = dial_adversary(p, cfg.delta)
        kind = "dial"
    single = execute(p, a).accept_probability
    out = []
    for k in range(1, cfg.k + 1):
        if (p.challenger.rounds[0].in_layout.total_dim * 4) ** k > 4 ** 12:
            break
        val = execute(parallel_repeat(p, k), product_adversary(a, k)).accept_probability
        out.append({"trial": t, "instance": kind, "k": k, "single": single, "repeated": val,
                    "expected": single ** k, "error": abs(val - single ** k)})
    return out


def _extract(cfg: ExperimentConfig, t: int) -> list[dict]:
    from .instances import forcing_values, planted_instance
    from .reduction import amp_nonuniform, best_advice, prefix_norms, select_index

    rng = trial_rng(cfg.seed, t)
    k = cfg.k
    lams = forcing_values(cfg.delta, k) if t % 2 else tuple(rng.uniform(cfg.delta, 1, size=k))
    inst = planted_instance(lams, rng, msg_dim=cfg.dim, mem_dim=2, entangle=bool(t % 3 == 0))
    games = inst.games
    i = select_index(prefix_norms(games), cfg.delta, k)
    aux = best_advice(games, i, cfg.delta)
    _, rep = amp_nonuniform(inst.base, inst.adversary, k, i, aux, cfg.mu, cfg.delta, 1.0,
                            build_adversary=False, games=games)
    return [{"trial": t, "k": k, "delta": cfg.delta, "index": i, "success": rep.success, "bound": rep.bound,
             "flag": rep.flag_probability, "gamma": rep.gamma, "ok": rep.success >= rep.bound - 1e-10}]


def _extract_uniform(cfg: ExperimentConfig, t: int) -> list[dict]:
    from .instances import planted_instance
    from .reduction import ReductionParams, amp_uniform

    rng = trial_rng(cfg.seed, t)
    inst = planted_instance((cfg.delta,) * cfg.k, np.random.default_rng([cfg.seed, 0]), msg_dim=cfg.dim)
    prm = ReductionParams.practical(cfg.k, cfg.delta, cfg.epsilon)
    _, rep = amp_uniform(inst.base, inst.adversary, prm, rng, games=inst.games)
    return [{"trial": t, "success": rep.success, "index": rep.index, "aborted": rep.aborted,
             "measurements": rep.measurements, "target": cfg.delta - cfg.epsilon, "eps0": prm.eps0}]


def _compress(cfg: ExperimentConfig, t: int) -> list[dict]:
    from . import compression as cm
    from .protocol import execute

    rng = trial_rng(cfg.seed, t)
    rounds = max(2, cfg.k - cfg.k % 2)
    p, a = cm.toy_protocol(rng, rounds=rounds, eps=cfg.epsilon)
    c = execute(p, a).accept_probability
    cp = cm.halve(p)
    ca, _ = cm.compress_honest(p, a)
    halved = cm.compressed_acceptance(cp, ca).total
    chain = cm.compress_to_three(p, a)
    final = execute(chain.final, chain.honest).accept_probability
    lift = cm.lift_adversary(cp, cm.perturb(ca, cfg.mu, rng))
    m = 2 * rounds + 1
    return [{"trial": t, "messages": m, "completeness": c, "halved": halved, "halved_expected": 1 - (1 - c) / 2,
             "three_message": final, "three_message_bound": cm.completeness_bound(c, m),
             "lift_eps": lift.eps, "lift_value": lift.unconditional, "lift_bound": 1 - 16 * lift.eps,
             "lift_checks": all(lift.checks().values())}]


def _public_coin(cfg: ExperimentConfig, t: int) -> list[dict]:
    from . import compression as cm
    from .protocol import execute

    rng = trial_rng(cfg.seed, t)
    p3, a3 = cm.toy_protocol(rng, rounds=1, eps=cfg.epsilon)
    c = execute(p3, a3).accept_probability
    cp = cm.to_public_coin(p3)
    ca, ua = cm.public_coin_honest(p3, a3)
    val = execute(cp.protocol, ua).accept_probability
    lift = cm.lift_adversary(cp, cm.perturb(ca, cfg.mu, rng))
    return [{"trial": t, "completeness": c, "public_coin": val, "expected": 1 - (1 - c) / 2,
             "error": abs(val - (1 - (1 - c) / 2)), "lift_eps": lift.eps,
             "lift_checks": all(lift.checks().values())}]


def _counterexample(cfg: ExperimentConfig, t: int) -> list[dict]:
    from .applications import forwarding_counterexample

    res = forwarding_counterexample(cfg.k)
    return [{"trial": t, "k": cfg.k, "win_probability": float(res.win_probability),
             "win_fraction": str(res.win_probability), "bit_vectors": len(res.records)}]


def _xor(cfg: ExperimentConfig, t: int) -> list[dict]:
    from . import applications as ap

    rng = trial_rng(cfg.seed, t)
    cc = ap.random_commitment(rng, cfg.dim, cfg.dim)
    delta = ap.binding_fidelity(cc)
    sw = ap.flavor_switch(cc)
    out = []
    for k in range(1, cfg.k + 1):
        if (2 * cfg.dim ** 2) ** k > 4096:
            break
        x = ap.xor_repeat(cc, k)
        dual = min(abs(np.vdot(x.state(b), ap.switched_xor_state(cc, k, b))) ** 2 for b in (0, 1))
        out.append({"trial": t, "k": k, "binding": delta, "switched_hiding": ap.hiding_advantage(sw),
                    "sqrt_binding": math.sqrt(delta), "xor_binding": ap.binding_fidelity(x),
                    "xor_binding_bound": k * math.sqrt(delta), "xor_hiding": ap.hiding_advantage(x),
                    "duality_fidelity": dual})
    return out


TRIALS = {"repeat_sweep": _repeat_sweep, "extract_nonuniform": _extract, "extract_uniform": _extract_uniform,
          "compress_check": _compress, "public_coin_check": _public_coin, "counterexample": _counterexample,
          "xor_sweep": _xor}


# ---------------------------------------------------------------------------
# aggregation


def _aggregate(cfg: ExperimentConfig, rec: list[dict]) -> tuple[dict, dict]:
    e = cfg.experiment
    if e == "repeat_sweep":
        err = max(r["error"] for r in rec)
        return {"max_error": err, "rows": len(rec)}, {"product_factorization": err <= 1e-10}
    if e == "extract_nonuniform":
        gap = min(r["success"] - r["bound"] for r in rec)
        return ({"mean_success": float(np.mean([r["success"] for r in rec])), "min_margin": gap},
                {"extraction_bound": all(r["ok"] for r in rec)})
    if e == "extract_uniform":
        n = len(rec)
        ran = [r for r in rec if r["aborted"] is None]
        aborts = (n - len(ran)) / n
        budget = rec[0]["eps0"] / 5  # copy exhaustion and transition aborts, eps0/10 each
        sigma = math.sqrt(max(budget * (1 - budget), 1e-12) / n)
        return ({"abort_frequency": aborts, "abort_budget": budget, "runs": len(ran),
                 "mean_success": float(np.mean([r["success"] for r in ran])) if ran else None},
                {"success_on_runs": all(r["success"] >= r["target"] - 1e-10 for r in ran),
                 "abort_budget": aborts <= budget + 3 * sigma})
    if e == "compress_check":
        return ({"max_halving_error": max(abs(r["halved"] - r["halved_expected"]) for r in rec)},
                {"halving_exact": all(abs(r["halved"] - r["halved_expected"]) <= 1e-10 for r in rec),
                 "three_message_bound": all(r["three_message"] >= r["three_message_bound"] - 1e-10 for r in rec),
                 "lift_inequalities": all(r["lift_checks"] for r in rec)})
    if e == "public_coin_check":
        return ({"max_error": max(r["error"] for r in rec)},
                {"public_coin_exact": all(r["error"] <= 1e-10 for r in rec),
                 "lift_inequalities": all(r["lift_checks"] for r in rec)})
    if e == "counterexample":
        return ({"win_probability": rec[0]["win_probability"]},
                {"exactly_half": all(r["win_fraction"] == "1/2" for r in rec)})
    if e == "xor_sweep":
        return ({"rows": len(rec), "min_duality_fidelity": min(r["duality_fidelity"] for r in rec)},
                {"switched_hiding_bound": all(r["switched_hiding"] <= r["sqrt_binding"] + 1e-8 for r in rec),
                 "xor_binding_bound": all(r["xor_binding"] <= r["xor_binding_bound"] + 1e-8 for r in rec),
                 "duality": all(r["duality_fidelity"] >= 1 - 1e-8 for r in rec)})
    raise ConfigError(e)


SELFTEST = (("repeat_sweep", {"k": 3, "trials": 2}), ("extract_nonuniform", {"k": 2, "trials": 2}),
            ("compress_check", {"k": 2, "trials": 1}), ("public_coin_check", {"trials": 2}),
            ("counterexample", {"k": 3, "trials": 1}), ("xor_sweep", {"k": 2, "trials": 2}))


def _run_trials(cfg: ExperimentConfig) -> list[dict]:
    fn = TRIALS[cfg.experiment]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            chunks = list(pool.map(fn, [cfg] * cfg.trials, range(cfg.trials)))
    else:
        chunks = [fn(cfg, t) for t in range(cfg.trials)]
    return [r for c in chunks for r in c]


def run(cfg: ExperimentConfig) -> RunReport:
    cfg.validate()
    start = time.perf_counter()
    if cfg.experiment == "selftest":
        records, checks = [], {}
        for name, over in SELFTEST:
            sub = replace(cfg, experiment=name, seed=cfg.seed if cfg.seed is not None else 0,
                          delta=0.8, mu=0.05, epsilon=0.1, dim=2, **over)
            rep = run(sub)
            for c, ok in rep.checks.items():
                checks[f"{name}.{c}"] = ok
                records.append({"experiment": name, "check": c, "passed": ok})
        aggregate = {"checks_run": len(checks)}
    else:
        records = _run_trials(cfg)
        aggregate, checks = _aggregate(cfg, records)
    checks = {k: bool(v) for k, v in checks.items()}
    return RunReport(asdict(cfg), records, aggregate, checks, all(checks.values()),
                     round(time.perf_counter() - start, 3), version())


# ---------------------------------------------------------------------------
# command line


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="parrep", description="Run seeded parallel-repetition experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config; flags override its fields")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--dim", type=int)
        sp.add_argument("--k", type=int)
        sp.add_argument("--delta", type=float)
        sp.add_argument("--mu", type=float)
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out")
        sp.add_argument("--format", choices=("json", "csv"))
    return ap


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    base = {}
    if ns.config:
        try:
            with open(ns.config) as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(base, dict):
            raise ConfigError("config must be a JSON object")
    names = {f.name for f in fields(ExperimentConfig)}
    unknown = set(base) - names
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    base["experiment"] = COMMANDS[ns.command]
    for n in names - {"experiment"}:
        v = getattr(ns, n, None)
        if v is not None:
            base[n] = v
    try:
        return ExperimentConfig(**base).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv: list[str] | None = None) -> int:
    try:
        ns = _parser().parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = config_from_args(ns)
        report = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    text = report.to_csv() if cfg.format == "csv" else report.to_json() + "\n"
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for name, ok in report.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}", file=sys.stderr)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
