"""Experiment harness: grid search, multi-seed evaluation and comparison."""

from __future__ import annotations

import csv
import hashlib
import inspect
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fabric
from .classic import (MaxPressureController, SotlController,
                      UniformController, WebsterController)
from .agents import DdpgConfig, DqnConfig
from .control import RewardNormalizer
from .network import NetworkModel
from .nn import load_checkpoint
from .simulation import DemandProfile, run_episode
from .stats import BoxStats, box_stats, mean_ci95, rank_score

CLASSIC_CONTROLLERS = {
    "uniform": UniformController,
    "webster": WebsterController,
    "maxpressure": MaxPressureController,
    "sotl": SotlController,
}
LEARNING_CONTROLLERS = ("dqn", "ddpg")
ALL_CONTROLLERS = tuple(CLASSIC_CONTROLLERS) + LEARNING_CONTROLLERS

DEFAULT_GRIDS = {
    "uniform": {"u": [5, 10, 15, 20, 25, 30]},
    "webster": {"W": [60, 120, 300], "c_min": [40], "c_max": [180]},
    "maxpressure": {"g_min": [10, 15, 20, 25]},
    "sotl": {"g_min": [5, 10], "theta": [10, 50, 200, 1000],
             "omega": [100], "mu": [3, 7]},
    "dqn": {"a_repeat": [5, 10, 15, 20]},
    "ddpg": {"g_min,g_max": [[5, 30], [5, 45], [5, 60], [10, 60]]},
}

TUNE_TRAIN_EPISODES = 200    # training budget per learning config
TUNE_TRAIN_HORIZON = 1200.0  # training episode length during tuning, seconds
EVAL_RUNS = 32
MOE_BIN_S = 60.0


class ConfigError(ValueError):
    """Unknown controller, hyperparameter, or inconsistent experiment setup."""


def check_controller(name: str) -> None:
    if name not in ALL_CONTROLLERS:
        raise ConfigError(f"unknown controller {name!r} "
                          f"(expected one of {ALL_CONTROLLERS})")


def _check_hp(name: str, hp: dict) -> None:
    if name in CLASSIC_CONTROLLERS:
        allowed = set(inspect.signature(
            CLASSIC_CONTROLLERS[name].__init__).parameters) - {"self"}
    elif name == "dqn":
        allowed = set(inspect.signature(DqnConfig).parameters)
    else:
        allowed = set(inspect.signature(DdpgConfig).parameters)
    unknown = set(hp) - allowed
    if unknown:
        raise ConfigError(f"unknown hyperparameter(s) {sorted(unknown)} "
                          f"for controller {name!r}")


def make_classic_controllers(net: NetworkModel, name: str, hp: dict) -> dict:
    check_controller(name)
    if name not in CLASSIC_CONTROLLERS:
        raise ConfigError(f"{name!r} is a learning controller; "
                          "train it or supply a checkpoint")
    _check_hp(name, hp)
    cls = CLASSIC_CONTROLLERS[name]
    return {ix.id: cls(**hp) for ix in net.intersections}


def agent_config(name: str, hp: dict):
    _check_hp(name, hp)
    return DqnConfig(**hp) if name == "dqn" else DdpgConfig(**hp)


def greedy_controllers(net: NetworkModel, name: str, agents: dict,
                       r_min: dict, seed: int = 0) -> dict:
    normalizers = {iid: RewardNormalizer(r_min.get(iid, 0.0))
                   for iid in agents}
    return fabric.build_controllers(net, name, agents, seed, explore=False,
                                    normalizers=normalizers)


def load_trained(net: NetworkModel, checkpoint_dir: str):
    """Rebuild trained agents from a checkpoint directory."""
    meta_path = os.path.join(checkpoint_dir, "meta.json")
    if not os.path.exists(meta_path):
        raise ConfigError(f"no checkpoint metadata at {meta_path}")
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    algo = meta["algo"]
    cfg = agent_config(algo, meta.get("config", {}))
    agents = fabric.build_agents(net, algo, cfg, seed=0)
    for iid, agent in agents.items():
        if iid not in meta["files"]:
            raise ConfigError(f"checkpoint missing intersection {iid!r}")
        named = load_checkpoint(os.path.join(checkpoint_dir,
                                             meta["files"][iid]))
        agent.load_checkpoint(named)
    return algo, agents, meta.get("r_min", {})


# -- identities and seeding ----------------------------------------------------

def config_id(name: str, hp: dict) -> str:
    parts = [name] + [f"{k}={hp[k]}" for k in sorted(hp)]
    return ";".join(parts)


def seed_for(cid: str, trial: int, base_seed: int) -> int:
    digest = hashlib.blake2b(f"{cid}|{trial}|{base_seed}".encode(),
                             digest_size=8).digest()
    return int.from_bytes(digest, "little") % (2 ** 31)


def condition_fingerprint(net: NetworkModel, demand: DemandProfile,
                          runs: int, base_seed: int,
                          horizon: float | None) -> dict:
    net_hash = hashlib.sha256(
        json.dumps(net.to_dict(), sort_keys=True).encode()).hexdigest()[:16]
    demand_hash = hashlib.sha256(json.dumps(
        {k: v for k, v in sorted(demand.breakpoints.items())},
        sort_keys=True).encode()).hexdigest()[:16]
    return {"net": net_hash, "demand": demand_hash, "runs": runs,
            "base_seed": base_seed, "horizon": horizon}


# -- grid search ------------------------------------------------------------------

@dataclass
class GridSpec:
    controller: str
    values: dict             # hyperparameter -> list of candidates
    trials: int = 8
    base_seed: int = 0

    def __post_init__(self):
        check_controller(self.controller)
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.values or any(not v for v in self.values.values()):
            raise ConfigError("grid value lists must be non-empty")

    def expand(self) -> list:
        """Cartesian product; a 'k1,k2' key assigns paired values."""
        configs = [{}]
        for key in sorted(self.values):
            nxt = []
            for cfg in configs:
                for val in self.values[key]:
                    new = dict(cfg)
                    if "," in key:
                        subkeys = [k.strip() for k in key.split(",")]
                        for sk, sv in zip(subkeys, val):
                            new[sk] = sv
                    else:
                        new[key] = val
                    nxt.append(new)
            configs = nxt
        return configs


@dataclass
class TrialResult:
    config_id: str
    hp: dict
    per_seed: list
    mu: float = 0.0
    sigma: float = 0.0
    score: float = 0.0

    def __post_init__(self):
        if self.per_seed:
            self.mu, self.sigma, self.score = rank_score(self.per_seed)

    def to_dict(self) -> dict:
        return {"config_id": self.config_id, "hp": self.hp,
                "per_seed": list(self.per_seed), "mu": self.mu,
                "sigma": self.sigma, "score": self.score}


def episode_mean_travel_time(net, demand, controllers, seed,
                             horizon=None) -> float:
    log = run_episode(net, demand, controllers, seed, horizon=horizon)
    tts = log.travel_time_values
    if not tts:
        return float("nan")
    return float(np.mean(tts))


def _classic_trial_task(args):
    net, demand, name, hp, cid, trial, base_seed, horizon = args
    controllers = make_classic_controllers(net, name, hp)
    seed = seed_for(cid, trial, base_seed)
    return cid, trial, episode_mean_travel_time(net, demand, controllers,
                                                seed, horizon)


def _learning_config_task(args):
    (net, demand, name, hp, cid, trials, base_seed, horizon,
     train_episodes, train_horizon) = args
    cfg = agent_config(name, hp)
    train_seed = seed_for(cid, -1, base_seed)
    result = fabric.train(
        net, demand, name, train_seed,
        fabric=fabric.FabricConfig(episode_budget=train_episodes,
                                   horizon=train_horizon),
        agent_cfg=cfg)
    controllers = greedy_controllers(net, name, result.agents, result.r_min)
    per_seed = []
    for trial in range(trials):
        seed = seed_for(cid, trial, base_seed)
        per_seed.append(episode_mean_travel_time(net, demand, controllers,
                                                 seed, horizon))
    return cid, per_seed


def tune(grid: GridSpec, net: NetworkModel, demand: DemandProfile,
         procs: int = 1, horizon: float | None = None,
         train_episodes: int = TUNE_TRAIN_EPISODES,
         train_horizon: float = TUNE_TRAIN_HORIZON,
         out_dir: str | None = None) -> list:
    """Grid search; returns TrialResults ranked ascending by mean + std."""
    name = grid.controller
    configs = grid.expand()
    for hp in configs:
        _check_hp(name, hp)
    cids = {config_id(name, hp): hp for hp in configs}
    results = {}

    if name in CLASSIC_CONTROLLERS:
        tasks = [(net, demand, name, hp, cid, trial, grid.base_seed, horizon)
                 for cid, hp in cids.items() for trial in range(grid.trials)]
        per_cid = {cid: [None] * grid.trials for cid in cids}
        if procs > 1:
            with ProcessPoolExecutor(max_workers=procs) as pool:
                outs = list(pool.map(_classic_trial_task, tasks))
        else:
            outs = [_classic_trial_task(t) for t in tasks]
        for cid, trial, mean_tt in outs:
            per_cid[cid][trial] = mean_tt
        for cid, per_seed in per_cid.items():
            results[cid] = TrialResult(cid, cids[cid], per_seed)
    else:
        tasks = [(net, demand, name, hp, cid, grid.trials, grid.base_seed,
                  horizon, train_episodes, train_horizon)
                 for cid, hp in cids.items()]
        if procs > 1:
            with ProcessPoolExecutor(max_workers=procs) as pool:
                outs = list(pool.map(_learning_config_task, tasks))
        else:
            outs = [_learning_config_task(t) for t in tasks]
        for cid, per_seed in outs:
            results[cid] = TrialResult(cid, cids[cid], per_seed)

    ranked = sorted(results.values(), key=lambda r: (r.score, r.config_id))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        _write_tune(out_dir, name, grid, ranked)
    return ranked


def _write_tune(out_dir, name, grid, ranked):
    with open(os.path.join(out_dir, "ranking.json"), "w",
              encoding="utf-8") as fh:
        json.dump({"controller": name, "trials": grid.trials,
                   "base_seed": grid.base_seed,
                   "ranking": [r.to_dict() for r in ranked]}, fh, indent=2)
    with open(os.path.join(out_dir, "trials.csv"), "w", newline="",
              encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["config_id", "trial", "seed_mean_travel_time"])
        for r in ranked:
            for trial, v in enumerate(r.per_seed):
                w.writerow([r.config_id, trial, repr(v)])


# -- evaluation -------------------------------------------------------------------

@dataclass
class EvalResult:
    controller: str
    hp: dict
    condition: dict
    travel_times: list
    box: BoxStats | None
    moe: dict = field(default_factory=dict)  # iid -> list of bin rows
    unfinished: int = 0

    def summary(self) -> dict:
        return {
            "controller": self.controller,
            "hp": self.hp,
            "condition": self.condition,
            "samples": len(self.travel_times),
            "no_samples": not self.travel_times,
            "unfinished": self.unfinished,
            "box": self.box.to_dict() if self.box else None,
        }


def _eval_run_task(args):
    net, demand, name, hp, checkpoint_dir, seed, horizon = args
    if name in CLASSIC_CONTROLLERS:
        controllers = make_classic_controllers(net, name, hp)
    else:
        algo, agents, r_min = load_trained(net, checkpoint_dir)
        if algo != name:
            raise ConfigError(f"checkpoint is for {algo!r}, not {name!r}")
        controllers = greedy_controllers(net, name, agents, r_min)
    log = run_episode(net, demand, controllers, seed, horizon=horizon)
    return log


def evaluate(name: str, hp: dict, net: NetworkModel, demand: DemandProfile,
             runs: int = EVAL_RUNS, base_seed: int = 0,
             checkpoint_dir: str | None = None,
             horizon: float | None = None, bin_s: float = MOE_BIN_S,
             procs: int = 1, out_dir: str | None = None) -> EvalResult:
    """Greedy multi-seed evaluation: pooled travel times plus MoE series."""
    check_controller(name)
    if name in LEARNING_CONTROLLERS:
        if checkpoint_dir is None:
            raise ConfigError(f"{name!r} needs a trained checkpoint")
    else:
        _check_hp(name, hp)

    tasks = [(net, demand, name, hp, checkpoint_dir, base_seed + i, horizon)
             for i in range(runs)]
    if procs > 1:
        with ProcessPoolExecutor(max_workers=procs) as pool:
            logs = list(pool.map(_eval_run_task, tasks))
    else:
        logs = [_eval_run_task(t) for t in tasks]

    travel_times = [tt for log in logs for tt in log.travel_time_values]
    condition = condition_fingerprint(net, demand, runs, base_seed, horizon)

    moe = {}
    for ix in net.intersections:
        iid = ix.id
        per_run_bins = {}  # bin index -> {"queue": [...], "delay": [...]}
        for log in logs:
            times = np.asarray(log.times)
            bins = (times // bin_s).astype(int)
            q = np.asarray(log.queue[iid])
            d = np.asarray(log.delay[iid])
            for b in np.unique(bins):
                mask = bins == b
                entry = per_run_bins.setdefault(int(b), {"queue": [],
                                                         "delay": []})
                entry["queue"].append(float(q[mask].mean()))
                entry["delay"].append(float(d[mask].mean()))
        rows = []
        for b in sorted(per_run_bins):
            qm, qc = mean_ci95(per_run_bins[b]["queue"])
            dm, dc = mean_ci95(per_run_bins[b]["delay"])
            rows.append({"bin_start_s": b * bin_s, "mean_queue": qm,
                         "ci95_queue": qc, "mean_delay": dm,
                         "ci95_delay": dc})
        moe[iid] = rows

    result = EvalResult(controller=name, hp=dict(hp), condition=condition,
                        travel_times=travel_times,
                        box=box_stats(travel_times), moe=moe,
                        unfinished=sum(log.unfinished for log in logs))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_eval(out_dir, result)
    return result


def write_eval(out_dir: str, result: EvalResult) -> None:
    with open(os.path.join(out_dir, "summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(result.summary(), fh, indent=2)
    with open(os.path.join(out_dir, "travel_times.csv"), "w", newline="",
              encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["travel_time_s"])
        for tt in result.travel_times:
            w.writerow([repr(tt)])
    with open(os.path.join(out_dir, "moe.csv"), "w", newline="",
              encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["intersection_id", "bin_start_s", "mean_queue",
                    "ci95_queue", "mean_delay", "ci95_delay"])
        for iid, rows in result.moe.items():
            for r in rows:
                w.writerow([iid, repr(r["bin_start_s"]),
                            repr(r["mean_queue"]), repr(r["ci95_queue"]),
                            repr(r["mean_delay"]), repr(r["ci95_delay"])])


def load_eval_summary(out_dir: str) -> dict:
    path = os.path.join(out_dir, "summary.json")
    if not os.path.exists(path):
        raise ConfigError(f"no evaluation summary at {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# -- comparison -------------------------------------------------------------------

def compare(summaries: list, out_dir: str | None = None) -> list:
    """Rank evaluated controllers by mean travel time; refuse mixed setups."""
    if len(summaries) < 2:
        raise ConfigError("compare needs at least two evaluated controllers")
    first = summaries[0]["condition"]
    for s in summaries[1:]:
        if s["condition"] != first:
            raise ConfigError(
                "evaluations were run under different conditions: "
                f"{first} vs {s['condition']}")
    rows = []
    for s in summaries:
        box = s.get("box") or {}
        rows.append({
            "controller": s["controller"],
            "hp": s["hp"],
            "mean": box.get("mean"),
            "std": box.get("std"),
            "median": box.get("median"),
            "iqr": box.get("iqr"),
            "outliers": len(box.get("outliers", [])),
            "samples": s.get("samples", 0),
        })
    rows.sort(key=lambda r: (r["mean"] is None, r["mean"]))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "comparison.json"), "w",
                  encoding="utf-8") as fh:
            json.dump({"condition": first, "ranking": rows}, fh, indent=2)
        with open(os.path.join(out_dir, "comparison.csv"), "w", newline="",
                  encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["controller", "mean", "std", "median", "iqr",
                        "outliers", "samples"])
            for r in rows:
                w.writerow([r["controller"], repr(r["mean"]), repr(r["std"]),
                            repr(r["median"]), repr(r["iqr"]),
                            r["outliers"], r["samples"]])
    return rows
