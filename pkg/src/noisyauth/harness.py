"""Command-line experiment runner.

Each experiment builds its objects from a JSON config, runs seeded Monte Carlo
trials and writes one CSV row per checked quantity.  Every row carries the
reference bound it was checked against and a ``passed`` flag; the exit status
is non-zero iff some row failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import bounds
from .adversary import (AttackReport, GreedySubstitute, Impersonate, RandomTamper, SubstituteFirstFlow,
                        greedy_sweep, monte_carlo, run_replay, run_type1, run_type1_detailed, run_type2,
                        run_type2_ni, trial_rng)
from .channel import DMC, cond_typical_mask, hull_distance, sample, theta, typical_mask
from .codes import estimate_error_rate, wilson_interval
from .errors import DomainError
from .noninteractive import min_distance_pair, ni_rate, ni_send, ni_setup, ni_verify_batch
from .setauth import Accept, message_distribution, run_honest, setup
from .setsys import check_recursion_bound, make_schedule

log = logging.getLogger("noisyauth")

EXPERIMENTS = ("correctness", "type1", "type2", "replay", "ni_rate", "lemma2_check", "lemma3_check",
               "schedule_audit")
ATTACK_EXPERIMENTS = ("type1", "type2", "replay")

CSV_FIELDS = ("experiment", "seed") + AttackReport.CSV_FIELDS + ("passed",)


@dataclass
class ExperimentConfig:
    experiment: str = "correctness"
    w1: object = field(default_factory=lambda: {"bsc": 0.05})
    w2: object = field(default_factory=lambda: {"bsc": 0.25})
    v1: int = 2 ** 20
    v1_log2: list = field(default_factory=lambda: [16, 256, 65536])
    n_prime: int = 400
    n: int = 200
    alpha: float = 0.25
    beta1: float | None = None
    beta2: float | None = None
    eps_override: float | None = None
    eps: float = 0.1
    eps1: float = 0.05
    eps2: float = 0.05
    trials: int = 1000
    master_seed: int = 0
    out: str | None = None
    threads: int = 1
    base_dir: str = "."

    @classmethod
    def from_dict(cls, data: dict, base_dir: str = ".") -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.base_dir = base_dir
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls.from_dict(data, base_dir=str(path.parent))

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise DomainError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.experiment in ATTACK_EXPERIMENTS and self.trials < 100:
            raise DomainError("attack experiments need at least 100 trials")
        if self.trials < 1:
            raise DomainError("trials must be positive")

    def channel(self, spec) -> DMC:
        if isinstance(spec, str):
            p = Path(spec)
            if not p.is_absolute():
                p = Path(self.base_dir) / p
            return DMC.load(p)
        if isinstance(spec, dict) and "bsc" in spec:
            return DMC.bsc(float(spec["bsc"]))
        if isinstance(spec, dict) and "identity" in spec:
            return DMC.identity(int(spec["identity"]))
        if isinstance(spec, dict):
            return DMC.from_dict(spec)
        return DMC(spec)

    @property
    def W1(self) -> DMC:
        return self.channel(self.w1)

    @property
    def W2(self) -> DMC:
        return self.channel(self.w2)


def _row(cfg: ExperimentConfig, rep: AttackReport, passed: bool | None = None) -> dict:
    if passed is None:
        passed = rep.within_bound("sigma")
        passed = True if passed is None else passed
    row = {"experiment": cfg.experiment, "seed": cfg.master_seed}
    row.update(rep.csv_row())
    row["passed"] = bool(passed)
    return row


def _value_report(name: str, params: str, value: float, bound: float, kind: str) -> AttackReport:
    """A deterministic quantity dressed as a report (zero trials, degenerate interval)."""
    return AttackReport(name, params, 0, 0, value, value, value, bound, kind)


def _check(value: float, bound: float, kind: str, tol: float = 1e-12) -> bool:
    return value <= bound + tol if kind == "upper" else value >= bound - tol


def _instance(cfg: ExperimentConfig, v1: int | None = None):
    rng = trial_rng(cfg.master_seed, 2 ** 31)
    return setup(cfg.W1, cfg.W2, cfg.v1 if v1 is None else v1, cfg.n_prime, cfg.beta1, cfg.beta2,
                 cfg.eps_override, rng=rng)


def _code_error(inst, cfg) -> float:
    est = estimate_error_rate(inst.code, inst.W1, max(cfg.trials, 256), trial_rng(cfg.master_seed, 2 ** 31 + 1))
    return est.rate


# -- experiments -----------------------------------------------------------------


def exp_correctness(cfg: ExperimentConfig) -> list[dict]:
    inst = _instance(cfg)
    code_err = _code_error(inst, cfg)
    check_fail = bounds.anchor_check_bound(inst.k, inst.gamma, inst.W1.output_size)
    bound = max(0.0, 1.0 - code_err - check_fail)

    def trial(r):
        s = int(r.integers(inst.v1))
        out = run_honest(inst, s, r)
        return isinstance(out, Accept) and out.s == s

    rep = monte_carlo(trial, cfg.trials, cfg.master_seed, bound, "lower", cfg.threads,
                      "honest", f"phi={inst.phi};code_error={code_err!r}")
    return [_row(cfg, rep)]


def exp_type1(cfg: ExperimentConfig) -> list[dict]:
    inst = _instance(cfg)
    code_err = _code_error(inst, cfg)
    eps = inst.schedule.eps
    total = bounds.type1_bound(eps, code_err)
    rows = []
    reports, best = greedy_sweep(inst, cfg.trials, cfg.master_seed, total, cfg.threads)
    for j, rep in zip(range(1, max(2, inst.phi)), reports):
        level = bounds.type1_level_bound(inst.phi, j, eps) + code_err if inst.phi >= 2 else code_err
        per = AttackReport(rep.strategy, rep.params + ";bound=level", rep.trials, rep.successes, rep.p_hat,
                           rep.ci_lo, rep.ci_hi, level, "upper")
        rows.append(_row(cfg, per))
    rows.append(_row(cfg, AttackReport(best.strategy, best.params + ";best_of_sweep", best.trials,
                                       best.successes, best.p_hat, best.ci_lo, best.ci_hi, total, "upper")))
    for strat in (SubstituteFirstFlow(), RandomTamper(0.5)):
        rep = monte_carlo(lambda r, st=strat: run_type1(inst, st, r), cfg.trials, cfg.master_seed,
                          total, "upper", cfg.threads, strat.name, strat.params())
        rows.append(_row(cfg, rep))
    rows.extend(_type1_conditional(cfg, inst, GreedySubstitute(int(best.params.split("=")[1])), code_err))
    return rows


def _type1_conditional(cfg, inst, strat, code_err) -> list[dict]:
    """Success split by whether Alice's last received value equals Bob's last sent one."""
    if inst.phi < 2:
        return []
    counts = {True: [0, 0], False: [0, 0]}
    for i in range(cfg.trials):
        t = run_type1_detailed(inst, strat, trial_rng(cfg.master_seed + 7919, i))
        if t.phi_match is not None:
            counts[t.phi_match][0] += 1
            counts[t.phi_match][1] += int(t.success)
    rows = []
    eps = inst.schedule.eps
    for match, bound in ((True, bounds.type1_sum_bound(inst.phi, eps) + code_err), (False, code_err)):
        n, hits = counts[match]
        if n == 0:
            continue
        lo, hi = wilson_interval(hits, n)
        rep = AttackReport(strat.name, strat.params() + f";conditional=phi_match_{match}", n, hits, hits / n,
                           lo, hi, bound, "upper")
        rows.append(_row(cfg, rep))
    return rows


def exp_type2(cfg: ExperimentConfig) -> list[dict]:
    inst = _instance(cfg)
    bound = bounds.impersonation_bound(inst.k, inst.gamma, inst.W1.output_size)
    strat = Impersonate()
    rep = monte_carlo(lambda r: run_type2(inst, strat, r), cfg.trials, cfg.master_seed, bound, "upper",
                      cfg.threads, strat.name, strat.params() + f";k={inst.k};gamma={inst.gamma!r}")
    return [_row(cfg, rep)]


def exp_replay(cfg: ExperimentConfig) -> list[dict]:
    inst = _instance(cfg)
    honest = monte_carlo(lambda r: isinstance(run_honest(inst, int(r.integers(inst.v1)), r), Accept),
                         cfg.trials, cfg.master_seed + 1)
    delta = 1.0 - honest.p_hat
    pf = message_distribution(inst)
    nz = pf[pf > 0]
    H = float(-(nz * np.log2(nz)).sum())
    bound = bounds.success_lower_bound(H, delta, inst.v1)
    rep = monte_carlo(lambda r: run_replay(inst, r), cfg.trials, cfg.master_seed, bound, "lower",
                      cfg.threads, "replay", f"H_F={H!r};delta={delta!r};S={inst.v1}")
    return [_row(cfg, rep)]


def exp_ni_rate(cfg: ExperimentConfig) -> list[dict]:
    W1, W2 = cfg.W1, cfg.W2
    rng = trial_rng(cfg.master_seed, 2 ** 31)
    scheme = ni_setup(W1, W2, cfg.n, cfg.alpha, rng, eps_override=cfg.eps_override)
    q, z = W1.input_size, W1.output_size
    rows = []
    params = f"n={scheme.n};alpha={scheme.alpha!r};eps={scheme.eps!r};N={scheme.size}"

    # honest acceptance
    fail = (bounds.typicality_failure_bound(scheme.k, scheme.eps, z)
            + bounds.cond_typicality_failure_bound(scheme.n, scheme.eps, q, z))
    def honest(r):
        s = int(r.integers(scheme.size))
        x, _ = ni_send(scheme, s)
        return bool(ni_verify_batch(scheme, sample(W1, x, r)[None, :], s)[0])
    rows.append(_row(cfg, monte_carlo(honest, cfg.trials, cfg.master_seed, max(0.0, 1.0 - fail), "lower",
                                      cfg.threads, "ni_honest", params)))

    # worst-pair substitution
    i, j = min_distance_pair(scheme.code)
    sub_bound = bounds.ni_substitution_bound(scheme.n, scheme.alpha, scheme.theta, q, z)
    x, _ = ni_send(scheme, i)
    Z = sample(W1, x, trial_rng(cfg.master_seed, 2 ** 31 + 2), size=cfg.trials)
    hits = int(ni_verify_batch(scheme, Z, j).sum())
    lo, hi = wilson_interval(hits, cfg.trials)
    rep = AttackReport("ni_substitution", params + f";pair={i}/{j}", cfg.trials, hits, hits / cfg.trials,
                       lo, hi, sub_bound, "upper")
    rows.append(_row(cfg, rep))

    # impersonation
    imp_bound = bounds.impersonation_bound(scheme.k, scheme.xi, z)
    mask = run_type2_ni(scheme, Impersonate(), trial_rng(cfg.master_seed, 2 ** 31 + 3), cfg.trials)
    hits = int(mask.sum())
    lo, hi = wilson_interval(hits, cfg.trials)
    rows.append(_row(cfg, AttackReport("ni_impersonate", params, cfg.trials, hits, hits / cfg.trials,
                                       lo, hi, imp_bound, "upper")))

    # rate accounting
    rate = ni_rate(scheme)
    rows.append(_row(cfg, _value_report("ni_rate_floor", params + f";asymptotic={rate.asymptotic_rate!r}",
                                        rate.rate, rate.floor_rate, "lower"),
                     _check(rate.rate, rate.floor_rate, "lower")))
    cap = math.log2(q)
    rows.append(_row(cfg, _value_report("ni_rate_ceiling", params, rate.rate, cap, "upper"),
                     _check(rate.rate, cap, "upper")))
    return rows


def exp_hull_radius(cfg: ExperimentConfig) -> list[dict]:
    """For target laws P, estimate how often the output type of W1 (inputs drawn
    from the hull-optimal mixture) lands within eps1 of P, then check the hull
    radius.  Targets: the rows of W2, the mean row of W1 and the point masses;
    point masses usually sit outside the hull, where the premise fails."""
    W, W2 = cfg.W1, cfg.W2
    n, eps1, eps2 = cfg.n, cfg.eps1, cfg.eps2
    targets = ([W2.row(i) for i in range(W2.input_size)] + [W.matrix.mean(axis=0)]
               + list(np.eye(W.output_size)))
    rows = []
    for t, P in enumerate(targets):
        hd = hull_distance(P, W.matrix)
        rng = trial_rng(cfg.master_seed, t)
        x = rng.choice(W.input_size, size=n, p=hd.weights)
        Z = sample(W, x, rng, size=cfg.trials)
        close = typical_mask(Z, P, eps1 * W.output_size)  # per-symbol radius eps1
        p_hat = float(close.mean())
        radius = bounds.hull_radius_bound(W.output_size, eps1, eps2, n)
        premise = p_hat > eps2
        passed = (not premise) or hd.distance <= radius + 1e-9
        rep = _value_report("hull_radius", f"target={t};prob={p_hat!r};premise={premise}", hd.distance, radius, "upper")
        rows.append(_row(cfg, rep, passed))
    return rows


def exp_cross_typicality(cfg: ExperimentConfig) -> list[dict]:
    W = cfg.W1
    n, alpha, eps = cfg.n, cfg.alpha, cfg.eps
    th = theta(W)
    rng = trial_rng(cfg.master_seed, 0)
    x = rng.integers(W.input_size, size=n)
    d = math.ceil(alpha * n)
    pos = rng.choice(n, size=d, replace=False)
    x_bar = x.copy()
    x_bar[pos] = (x[pos] + rng.integers(1, W.input_size, size=d)) % W.input_size
    bound = bounds.cross_typicality_bound(n, alpha, th, eps, W.input_size, W.output_size)
    hits = 0
    done = 0
    while done < cfg.trials:
        m = min(20000, cfg.trials - done)
        Y = sample(W, x, rng, size=m)
        hits += int(cond_typical_mask(Y, x_bar, W, eps).sum())
        done += m
    lo, hi = wilson_interval(hits, cfg.trials)
    rep = AttackReport("cross_typicality", f"n={n};alpha={alpha!r};eps={eps!r};theta={th!r}", cfg.trials, hits,
                       hits / cfg.trials, lo, hi, bound, "upper")
    return [_row(cfg, rep)]


def exp_schedule_audit(cfg: ExperimentConfig) -> list[dict]:
    from .channel import capacity

    W1 = cfg.W1
    C = capacity(W1)
    R = C / 2
    beta1 = cfg.beta1 if cfg.beta1 is not None else R / 8
    beta2 = cfg.beta2 if cfg.beta2 is not None else R / 4
    k = math.isqrt(cfg.n_prime)
    k = k if k * k == cfg.n_prime else k + 1
    n = cfg.n_prime + k
    rows = []
    for L in cfg.v1_log2:
        sched = make_schedule(2 ** int(L), cfg.n_prime, beta1, beta2, max_v=None)
        chk = check_recursion_bound(sched)
        rounds = sched.phi + 1
        params = f"v1=2^{L};phi={sched.phi};eps={sched.eps!r}"
        ok = True if chk is None else chk.ok
        rows.append(_row(cfg, _value_report("recursion_bound", params + f";applicable={chk is not None}",
                                            float(ok), 1.0, "lower"), ok))
        upper = bounds.round_upper_bound(L, n)
        rows.append(_row(cfg, _value_report("round_upper", params, float(rounds), float(upper), "upper"),
                         rounds <= upper))
        gap = rounds - bounds.round_lower_bound_raw(L, n)
        rows.append(_row(cfg, _value_report("round_gap", params, float(gap), 9.0, "upper"), gap <= 9))
    return rows


RUNNERS = {
    "correctness": exp_correctness,
    "type1": exp_type1,
    "type2": exp_type2,
    "replay": exp_replay,
    "ni_rate": exp_ni_rate,
    "lemma2_check": exp_hull_radius,
    "lemma3_check": exp_cross_typicality,
    "schedule_audit": exp_schedule_audit,
}


def run_experiment(cfg: ExperimentConfig) -> tuple[list[dict], int]:
    cfg.validate()
    rows = RUNNERS[cfg.experiment](cfg)
    status = 0 if all(r["passed"] for r in rows) else 1
    return rows, status


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in CSV_FIELDS})
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="noisyauth", description=__doc__.splitlines()[0],
                                 formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("--config", type=Path, help="JSON experiment config; keys mirror ExperimentConfig fields")
    ap.add_argument("--experiment", choices=EXPERIMENTS, help="override the config's experiment kind")
    ap.add_argument("--seed", type=int, help="master seed (unsigned 64-bit); overrides the config")
    ap.add_argument("--trials", type=int, help="Monte Carlo trials; overrides the config")
    ap.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                    help="worker threads; results do not depend on this")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        if args.experiment:
            cfg.experiment = args.experiment
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise DomainError("seed must be an unsigned 64-bit integer")
            cfg.master_seed = args.seed
        if args.trials is not None:
            cfg.trials = args.trials
        cfg.threads = max(1, args.threads)
        out = args.out or (Path(cfg.out) if cfg.out else None)
        rows, status = run_experiment(cfg)
    except (DomainError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    text = rows_to_csv(rows)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    for r in rows:
        if not r["passed"]:
            log.warning("row failed: %s %s p_hat=%r bound=%r", r["strategy"], r["params"], r["p_hat"],
                        r["theory_bound"])
    return status


if __name__ == "__main__":
    sys.exit(main())
