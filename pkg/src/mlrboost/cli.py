"""Command-line harness: ``run``, ``simulate``, ``certify-wlc`` and ``dump-potentials``.

Exit codes: 0 on success, 2 on a configuration error, 3 on a data error.
Metrics are written one record per line (JSON-lines by default) next to a
``<stem>.summary.csv`` file. Wall-clock times are only recorded with
``--timing`` so that repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from mlrboost.boosters import AdaOLMR, LossTracker
from mlrboost.core import LabelSet
from mlrboost.dataio import DataError, load_dataset
from mlrboost.losses import LossKind
from mlrboost.potentials import PotentialTable, zero_state_bound
from mlrboost.simulation import certify_run, example_rounds, make_booster, run_rounds, simulate
from mlrboost.weak_learners import PerLabelLinearLearner, StumpLearner

log = logging.getLogger("mlrboost")

GAMMA_GRIDS = {
    "small": (0.2, 0.1, 0.01, 0.001),
    "large": (0.05, 0.01, 0.005, 0.001),
}
EXIT_CONFIG = 2
EXIT_DATA = 3


class ConfigError(ValueError):
    pass


# -- configuration ------------------------------------------------------------


@dataclass
class RunConfig:
    algo: str = "olmr"
    n_learners: int = 100
    gamma: float | None = None
    gamma_grid: str | None = None
    loss: str = "hinge"
    learner: str = "stump"
    pool_size: int = 20
    learning_rate: float = 0.1
    feed: str = "argmin"
    train: str | None = None
    test: str | None = None
    labels: list[str] | None = None
    n_labels: int | None = None
    seed: int = 0
    seeds: int = 1
    window: int = 100
    out: str | None = None
    format: str = "jsonl"
    timing: bool = False
    workers: int = 1

    def gammas(self) -> list[float | None]:
        if self.algo != "bmr":
            return [None]
        if self.gamma_grid is not None:
            return list(GAMMA_GRIDS[self.gamma_grid])
        return [self.gamma]

    def validate(self) -> "RunConfig":
        if self.algo not in ("bmr", "olmr"):
            raise ConfigError(f"algo must be bmr or olmr, got {self.algo!r}")
        if self.n_learners is None or self.n_learners < 1:
            raise ConfigError("n_learners must be at least 1")
        if self.algo == "bmr":
            if (self.gamma is None) == (self.gamma_grid is None):
                raise ConfigError("bmr needs exactly one of gamma or gamma_grid")
            if self.gamma_grid is not None and self.gamma_grid not in GAMMA_GRIDS:
                raise ConfigError(f"gamma_grid must be one of {sorted(GAMMA_GRIDS)}")
            if self.gamma is not None and not 0 < self.gamma < 1:
                raise ConfigError("gamma must lie in (0, 1)")
            try:
                kind = LossKind.parse(self.loss)
            except ValueError as err:
                raise ConfigError(str(err)) from None
            if kind is LossKind.LOGISTIC:
                raise ConfigError("bmr potentials support rank or hinge loss only")
        elif self.gamma is not None or self.gamma_grid is not None:
            raise ConfigError("olmr takes no gamma")
        if self.learner not in ("stump", "linear"):
            raise ConfigError(f"learner must be stump or linear, got {self.learner!r}")
        if self.feed not in ("argmin", "relevant"):
            raise ConfigError("feed must be argmin or relevant")
        if not self.train and not self.test:
            raise ConfigError("need --train and/or --test")
        if (self.labels is None) == (self.n_labels is None) and _needs_label_spec(self):
            raise ConfigError("ARFF input needs exactly one of --labels or --n-labels")
        if self.seeds < 1 or self.window < 1 or self.workers < 1:
            raise ConfigError("seeds, window and workers must be positive")
        if self.format not in ("jsonl", "csv"):
            raise ConfigError("format must be jsonl or csv")
        return self


def _needs_label_spec(cfg) -> bool:
    return any(p and str(p).lower().endswith(".arff") for p in (cfg.train, cfg.test))


@dataclass
class SimConfig:
    algo: str = "bmr"
    k: int = 5
    gamma: float = 0.2
    n_learners: int = 20
    rounds: int = 5000
    learner: str = "oracle"
    loss: str = "rank"
    S: float | None = None
    delta: float = 0.05
    seed: int = 0
    seeds: int = 1
    window: int = 100
    record_every: int = 1
    out: str | None = None
    format: str = "jsonl"
    timing: bool = False
    workers: int = 1

    def validate(self) -> "SimConfig":
        if self.algo not in ("bmr", "olmr"):
            raise ConfigError(f"algo must be bmr or olmr, got {self.algo!r}")
        if self.k < 2 or self.k > 30:
            raise ConfigError("k must lie in [2, 30]")
        if self.n_learners < 1 or self.rounds < 1 or self.seeds < 1 or self.record_every < 1:
            raise ConfigError("n_learners, rounds, seeds and record_every must be positive")
        if self.learner not in ("oracle", "adversarial"):
            raise ConfigError("learner must be oracle or adversarial")
        if self.learner == "oracle" and not 0 <= self.gamma <= 1.0 / (self.k - 1):
            raise ConfigError(f"oracle edge must lie in [0, 1/(k-1)] = [0, {1 / (self.k - 1):.4g}]")
        if self.learner == "adversarial" and not 0 < self.gamma < 1.0 / (2 * self.k):
            raise ConfigError(f"adversarial gamma must lie in (0, 1/(2k)) = (0, {1 / (2 * self.k):.4g})")
        if self.algo == "bmr" and not 0 < self.gamma < 1:
            raise ConfigError("bmr needs gamma in (0, 1)")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        try:
            kind = LossKind.parse(self.loss)
        except ValueError as err:
            raise ConfigError(str(err)) from None
        if kind is LossKind.LOGISTIC:
            raise ConfigError("potentials support rank or hinge loss only")
        if self.format not in ("jsonl", "csv"):
            raise ConfigError("format must be jsonl or csv")
        return self

    @property
    def excess(self) -> float:
        return self.S if self.S is not None else self.k * math.log(1.0 / self.delta) / self.gamma


def _load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    except yaml.YAMLError as err:
        raise ConfigError(f"cannot parse config {path}: {err}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def build_config(cls, args: argparse.Namespace):
    """Defaults, then the config file, then explicitly given flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(_load_config_file(args.config))
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    try:
        return cls(**values).validate()
    except TypeError as err:
        raise ConfigError(str(err)) from None


# -- output -------------------------------------------------------------------


def _seed_path(out: str | None, tag: str | None) -> Path | None:
    if out is None:
        return None
    p = Path(out)
    return p if tag is None else p.with_name(f"{p.stem}.{tag}{p.suffix}")


def _summary_path(out: str) -> Path:
    p = Path(out)
    return p.with_name(f"{p.stem}.summary.csv")


def _csv_cell(v):
    if isinstance(v, (list, tuple)):
        return ";".join("" if x is None else repr(x) for x in v)
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else v


def write_records(path: Path, records: list[dict], fmt: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if fmt == "jsonl":
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
        else:
            cols = list(records[0]) if records else ["t"]
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for rec in records:
                w.writerow([_csv_cell(rec.get(c)) for c in cols])


def write_summary(path: Path, rows: list[dict]) -> None:
    cols: list[str] = []
    for row in rows:
        cols.extend(c for c in row if c not in cols)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_csv_cell(row.get(c)) for c in cols])


def _booster_fields(booster) -> dict:
    if isinstance(booster, AdaOLMR):
        return {
            "expert_losses": [float(x) for x in booster.expert_mean_losses],
            "empirical_edges": booster.empirical_edges(),
        }
    return {}


def _aggregate(rows: list[dict], key: str = "mean_rank_loss") -> list[dict]:
    vals = np.array([r[key] for r in rows], dtype=float)
    extra = {"label": "mean", key: float(vals.mean())}
    std = {"label": "std", key: float(vals.std(ddof=1)) if vals.size > 1 else 0.0}
    return rows + [extra, std]


def _fan_out(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


# -- run ----------------------------------------------------------------------


def make_learners(cfg: RunConfig, k: int, dim: int, seed: np.random.SeedSequence):
    seeds = seed.spawn(cfg.n_learners)
    learners = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        if cfg.learner == "stump":
            learners.append(StumpLearner(k, dim, pool_size=cfg.pool_size, n_thresholds=int(rng.integers(4, 17)),
                                         warmup=int(rng.integers(20, 51)), feed=cfg.feed, seed=rng))
        else:
            learners.append(PerLabelLinearLearner(k, dim, learning_rate=cfg.learning_rate, feed=cfg.feed, seed=rng))
    return learners


def _load_split(cfg: RunConfig, path, split):
    labels = cfg.labels
    if isinstance(labels, str):
        labels = [x for x in labels.split(",") if x]
    return load_dataset(path, label_names=labels, n_labels=cfg.n_labels if labels is None else None, split=split)


def run_once(cfg: RunConfig, seed: int, gamma: float | None) -> tuple[list[dict], dict]:
    """Progressive pass over train then test; metrics are recorded on test rounds only."""
    start = time.perf_counter()
    splits, headers = [], []
    for path, split in ((cfg.train, "train"), (cfg.test, "test")):
        if path:
            h, stream = _load_split(cfg, path, split)
            headers.append(h)
            splits.append((split, stream))
    k = headers[0].label_count
    if any(h.label_count != k for h in headers):
        raise DataError(f"label count differs between splits: {[h.label_count for h in headers]}")
    dim = max(h.feature_count for h in headers)
    boost_seed, learner_seed = np.random.SeedSequence(seed).spawn(2)
    learners = make_learners(cfg, k, dim, learner_seed)
    booster = make_booster(cfg.algo, learners, k, gamma=gamma, loss=LossKind.parse(cfg.loss),
                           seed=boost_seed, window=cfg.window)
    recorded = any(s == "test" for s, _ in splits)
    tracker = LossTracker(cfg.window)
    records = []
    t_global = 0
    for split, stream in splits:
        for _, _, value in run_rounds(booster, example_rounds(stream)):
            t_global += 1
            if recorded and split != "test":
                continue
            tracker.add(value)
            rec = {"t": t_global, "avg_rank_loss": tracker.mean, "window_rank_loss": tracker.window_mean}
            rec.update(_booster_fields(booster))
            if cfg.timing:
                rec["elapsed"] = time.perf_counter() - start
            records.append(rec)
    summary = {"label": f"seed{seed}" if gamma is None else f"seed{seed}-gamma{gamma}", "algo": cfg.algo,
               "seed": seed, "gamma": gamma, "rounds": tracker.count, "mean_rank_loss": tracker.mean,
               "runtime_s": time.perf_counter() - start if cfg.timing else None}
    return records, summary


def cmd_run(cfg: RunConfig) -> list[dict]:
    if cfg.algo == "bmr" and LossKind.parse(cfg.loss) is LossKind.RANK:
        log.warning("rank-loss potentials are only guaranteed for single-label learners; "
                    "%s learners predict distributions", cfg.learner)
    seeds = [cfg.seed + j for j in range(cfg.seeds)]
    gammas = cfg.gammas()
    jobs = [(cfg, s, g) for g in gammas for s in seeds]
    results = _fan_out(run_once, jobs, cfg.workers)
    rows = []
    for (c, s, g), (records, summary) in zip(jobs, results):
        if cfg.out:
            tags = []
            if len(gammas) > 1:
                tags.append(f"gamma{g}")
            if len(seeds) > 1:
                tags.append(f"seed{s}")
            write_records(_seed_path(cfg.out, ".".join(tags) or None), records, cfg.format)
        rows.append(summary)
    if len(gammas) > 1:
        per_gamma = []
        for g in gammas:
            vals = [r["mean_rank_loss"] for r in rows if r["gamma"] == g]
            per_gamma.append({"label": f"gamma{g}", "gamma": g, "mean_rank_loss": float(np.mean(vals))})
        best = min(per_gamma, key=lambda r: r["mean_rank_loss"])
        rows = rows + per_gamma + [dict(best, label="best_bmr")]
    elif len(seeds) > 1:
        rows = _aggregate(rows)
    if cfg.out:
        write_summary(_summary_path(cfg.out), rows)
    return rows


# -- simulate -----------------------------------------------------------------


def simulate_once(cfg: SimConfig, seed: int) -> tuple[list[dict], dict]:
    start = time.perf_counter()
    N, gamma = cfg.n_learners, cfg.gamma
    bounds = {"bound_rank": zero_state_bound(LossKind.RANK, gamma, N),
              "bound_hinge": zero_state_bound(LossKind.HINGE, gamma, N)}
    records = []

    def on_round(t, Y, value, booster):
        if t % cfg.record_every and t != cfg.rounds:
            return
        rec = {"t": t, "avg_rank_loss": booster.tracker.mean, "window_rank_loss": booster.tracker.window_mean}
        rec.update(_booster_fields(booster))
        rec.update(bounds)
        if cfg.timing:
            rec["elapsed"] = time.perf_counter() - start
        records.append(rec)

    result = simulate(cfg.algo, cfg.k, gamma, N, cfg.rounds, learner=cfg.learner, seed=seed,
                      loss=LossKind.parse(cfg.loss), S=cfg.excess if cfg.learner == "adversarial" else None,
                      delta=cfg.delta, on_round=on_round, window=cfg.window)
    summary = {"label": f"seed{seed}", "algo": cfg.algo, "seed": seed, "rounds": cfg.rounds,
               "mean_rank_loss": result.mean_loss, **bounds}
    if isinstance(result.booster, AdaOLMR):
        edges = [e for e in result.booster.empirical_edges() if e is not None]
        total = sum(abs(e) for e in edges)
        summary["olmr_bound"] = 8.0 / total if total > 0 else None
    if cfg.learner == "adversarial":
        t0 = result.booster.learners[0].t0
        summary["t0"] = t0
        summary["mean_rank_loss_before_t0"] = float(result.losses[: min(t0, cfg.rounds)].mean())
    summary["runtime_s"] = time.perf_counter() - start if cfg.timing else None
    return records, summary


def cmd_simulate(cfg: SimConfig) -> list[dict]:
    seeds = [cfg.seed + j for j in range(cfg.seeds)]
    results = _fan_out(simulate_once, [(cfg, s) for s in seeds], cfg.workers)
    rows = []
    for s, (records, summary) in zip(seeds, results):
        if cfg.out:
            write_records(_seed_path(cfg.out, f"seed{s}" if len(seeds) > 1 else None), records, cfg.format)
        rows.append(summary)
    if len(seeds) > 1:
        rows = _aggregate(rows)
    if cfg.out:
        write_summary(_summary_path(cfg.out), rows)
    return rows


# -- certify-wlc ----------------------------------------------------------------


def certification_threshold(delta: float, reps: int) -> float:
    return 1.0 - delta - 2.0 * math.sqrt(delta * (1.0 - delta) / reps)


def cmd_certify_wlc(learner: str, k: int, gamma: float, delta: float, S: float | None, rounds: int, reps: int,
                    n_learners: int = 1, edge: float | None = None, seed: int = 0, prefixes: bool = True) -> dict:
    if reps < 1:
        raise ConfigError("reps must be at least 1")
    if not 0 < delta < 1 or not 0 < gamma < 1 or rounds < 1 or n_learners < 1 or k < 2:
        raise ConfigError("need 0 < delta, gamma < 1, k >= 2 and positive rounds and n_learners")
    if S is None:
        S = k * math.log(1.0 / delta) / gamma
    if learner == "oracle":
        e = gamma if edge is None else edge
        if not 0 <= e <= 1.0 / (k - 1):
            raise ConfigError(f"oracle edge must lie in [0, 1/(k-1)], got {e}")
    elif learner == "adversarial":
        if not 0 < gamma < 1.0 / (2 * k):
            raise ConfigError("adversarial gamma must lie in (0, 1/(2k))")
    else:
        raise ConfigError("learner must be oracle or adversarial")
    passed = 0
    for j in range(reps):
        try:
            reports = certify_run(learner, k, gamma, delta, S, rounds, N=n_learners, edge=edge, seed=seed + j)
        except ValueError as err:
            raise ConfigError(str(err)) from None
        ok = all(r.satisfied_all_prefixes if prefixes else r.satisfied for r in reports)
        passed += ok
    fraction = passed / reps
    threshold = certification_threshold(delta, reps)
    return {"learner": learner, "k": k, "gamma": gamma, "edge": edge, "delta": delta, "S": S, "rounds": rounds,
            "reps": reps, "satisfied_runs": passed, "fraction": fraction, "threshold": threshold,
            "passed": fraction >= threshold}


# -- dump-potentials ----------------------------------------------------------


def cmd_dump_potentials(k: int, size_y: int, gamma: float, loss: str, max_horizon: int) -> list[dict]:
    if not 0 < size_y < k:
        raise ConfigError("need 0 < size_y < k")
    if max_horizon < 0:
        raise ConfigError("max_horizon must be non-negative")
    try:
        kind = LossKind.parse(loss)
        table = PotentialTable(k, gamma, kind)
        Y = LabelSet(frozenset(range(size_y)), k)
        zero = np.zeros(k)
        return [{"horizon": h, "potential": table.potential(Y, zero, h), "bound": zero_state_bound(kind, gamma, h)}
                for h in range(max_horizon + 1)]
    except ValueError as err:
        raise ConfigError(str(err)) from None


# -- argument parsing -----------------------------------------------------------


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML or JSON file with option values; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, help="number of consecutive seeds to run")
    p.add_argument("--window", type=int, help="window length for the windowed rank loss")
    p.add_argument("--out", help="metrics file; a .summary.csv file is written next to it")
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.add_argument("--timing", action="store_const", const=True, help="record wall-clock times")
    p.add_argument("--workers", type=int, help="worker processes for multi-seed runs")
    p.add_argument("--algo", choices=("bmr", "olmr"))
    p.add_argument("--n-learners", dest="n_learners", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--loss", choices=("rank", "hinge"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlrboost", description="Online boosting for multi-label ranking.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="boost over a dataset with progressive evaluation")
    _common(run)
    run.add_argument("--gamma-grid", dest="gamma_grid", choices=sorted(GAMMA_GRIDS))
    run.add_argument("--learner", choices=("stump", "linear"))
    run.add_argument("--pool-size", dest="pool_size", type=int)
    run.add_argument("--learning-rate", dest="learning_rate", type=float)
    run.add_argument("--feed", choices=("argmin", "relevant"))
    run.add_argument("--train")
    run.add_argument("--test")
    run.add_argument("--labels", help="comma-separated label attribute names (ARFF)")
    run.add_argument("--n-labels", dest="n_labels", type=int, help="labels are the trailing N attributes (ARFF)")

    sim = sub.add_parser("simulate", help="boost clairvoyant learners against a random label adversary")
    _common(sim)
    sim.add_argument("--k", type=int)
    sim.add_argument("--rounds", type=int)
    sim.add_argument("--learner", choices=("oracle", "adversarial"))
    sim.add_argument("--S", type=float, help="excess loss for the adversarial learner")
    sim.add_argument("--delta", type=float)
    sim.add_argument("--record-every", dest="record_every", type=int)

    cert = sub.add_parser("certify-wlc", help="check the online weak learning condition over seeded runs")
    cert.add_argument("--learner", choices=("oracle", "adversarial"), default="oracle")
    cert.add_argument("--k", type=int, default=4)
    cert.add_argument("--gamma", type=float, default=0.1)
    cert.add_argument("--edge", type=float, help="true edge of oracle learners (default: gamma)")
    cert.add_argument("--delta", type=float, default=0.05)
    cert.add_argument("--S", type=float, help="excess loss (default: k ln(1/delta) / gamma)")
    cert.add_argument("--rounds", type=int, default=600)
    cert.add_argument("--reps", type=int, default=200)
    cert.add_argument("--n-learners", dest="n_learners", type=int, default=1)
    cert.add_argument("--seed", type=int, default=0)
    cert.add_argument("--final-only", action="store_true", help="check the final sums only, not every prefix")
    cert.add_argument("--out")

    dump = sub.add_parser("dump-potentials", help="tabulate zero-state potentials against their bounds")
    dump.add_argument("--k", type=int, required=True)
    dump.add_argument("--size-y", dest="size_y", type=int, required=True)
    dump.add_argument("--gamma", type=float, required=True)
    dump.add_argument("--loss", choices=("rank", "hinge"), default="rank")
    dump.add_argument("--max-horizon", dest="max_horizon", type=int, default=100)
    dump.add_argument("--out")
    return parser


def _emit_csv(rows: list[dict], out) -> None:
    if out:
        write_summary(Path(out), rows)
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows({k: _csv_cell(v) for k, v in r.items()} for r in rows)
        sys.stdout.write(buf.getvalue())


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_CONFIG if err.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            rows = cmd_run(build_config(RunConfig, args))
            _emit_csv(rows, None)
        elif args.command == "simulate":
            rows = cmd_simulate(build_config(SimConfig, args))
            _emit_csv(rows, None)
        elif args.command == "certify-wlc":
            report = cmd_certify_wlc(args.learner, args.k, args.gamma, args.delta, args.S, args.rounds, args.reps,
                                     args.n_learners, args.edge, args.seed, prefixes=not args.final_only)
            text = json.dumps(report)
            if args.out:
                Path(args.out).write_text(text + "\n", encoding="utf-8")
            print(text)
        else:
            rows = cmd_dump_potentials(args.k, args.size_y, args.gamma, args.loss, args.max_horizon)
            _emit_csv(rows, args.out)
    except ConfigError as err:
        print(json.dumps({"error": "config", "message": str(err)}), file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as err:
        print(json.dumps({"error": "data", "message": str(err)}), file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
