"""Config-driven experiment runner: simulate, filter, record, summarize.

Every compared filter inside one repeat consumes the identical ground truth
and observation sequence (asserted via a digest of the observation bytes).
Output is machine-oriented: a per-step CSV, a JSON summary, and a long-format
CSV convenient for plotting tools. Identical (config, seed) pairs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..core import RngStream, particle_mean_cov
from ..filters import (
    FilterConfig,
    FilterState,
    pf_step,
    spf_predict,
    spf_update,
)
from ..metrics import quantiles
from ..models import ModelPair, lingauss_step_oracle
from .scenarios import Scenario, build_scenario, SCENARIO_NAMES

FILTER_TYPES = ("spf", "pf", "kalman")


@dataclass
class ScenarioConfig:
    """Validated experiment description (normally loaded from JSON)."""

    scenario: str
    filters: List[Dict]
    horizon: int = 30
    repeats: int = 1
    seed: int = 0
    params: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in SCENARIO_NAMES:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.horizon < 1 or self.repeats < 1:
            raise ValueError("horizon and repeats must be >= 1")
        if not self.filters:
            raise ValueError("at least one filter must be configured")
        names = set()
        for f in self.filters:
            if "name" not in f or "type" not in f:
                raise ValueError("each filter needs 'name' and 'type'")
            if f["type"] not in FILTER_TYPES:
                raise ValueError(f"unknown filter type {f['type']!r}")
            if f["name"] in names:
                raise ValueError(f"duplicate filter name {f['name']!r}")
            names.add(f["name"])
            if f["type"] != "kalman":
                spec = {k: v for k, v in f.items() if k not in ("name", "type")}
                if f["type"] == "pf":
                    spec = {k: v for k, v in spec.items() if k == "n_particles"}
                FilterConfig.from_dict({"n_particles": 1, **spec})
        map_file = self.params.get("map_file")
        if map_file is not None and not Path(map_file).exists():
            raise ValueError(f"referenced map file does not exist: {map_file}")

    @classmethod
    def from_dict(cls, data: Dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_json_file(cls, path) -> "ScenarioConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


ROW_FIELDS = (
    "repeat",
    "t",
    "filter",
    "error_norm",
    "rmse_to_date",
    "ess",
    "ms_update",
    "ms_per_iter",
    "mode_coverage",
)  # plus est_0..est_{d-1} appended per scenario dimension


def _filter_seed(root_seed: int, repeat: int, filter_index: int) -> int:
    ss = np.random.SeedSequence(entropy=root_seed, spawn_key=(100 + repeat, filter_index))
    return int(ss.generate_state(1, dtype=np.uint64)[0] % (2**63))


def _scenario_for_repeat(cfg: ScenarioConfig, repeat: int) -> Scenario:
    params = dict(cfg.params)
    params.setdefault("horizon", cfg.horizon)
    rng = RngStream(cfg.seed).child("scenario", repeat)
    return build_scenario(cfg.scenario, params, rng)


def _estimate(state: FilterState) -> np.ndarray:
    mean, _ = particle_mean_cov(state.particles)
    return mean


def _run_one_filter(cfg: ScenarioConfig, repeat: int, filter_index: int) -> Dict:
    """Drive one filter through one simulated repeat; returns rows + stats."""
    scenario = _scenario_for_repeat(cfg, repeat)
    fdict = dict(cfg.filters[filter_index])
    name = fdict.pop("name")
    ftype = fdict.pop("type")
    seed = _filter_seed(cfg.seed, repeat, filter_index)

    dims = scenario.error_dims
    period = scenario.error_period
    success_radius = float(cfg.params.get("success_radius", 2.0))
    is_grid = cfg.scenario.startswith("grid-localize")

    rows: List[Dict] = []
    errors: List[float] = []
    estimates: List[np.ndarray] = []
    times: List[float] = []
    iter_times: List[float] = []
    failed_at: Optional[int] = None

    if ftype == "kalman":
        if cfg.scenario != "lingauss-verify":
            raise ValueError("the kalman filter type applies to lingauss-verify only")
        model = scenario.models.transition  # LinearGaussianModel plays both roles
        mean = np.zeros(scenario.truth.shape[1])
        cov = scenario.extras["init_cov"].copy()
    else:
        fcfg = FilterConfig.from_dict({**fdict, "seed": seed})
        state = scenario.init(fcfg.n_particles, RngStream(seed).child("init"))
        pf_rng = RngStream(seed)

    for t in range(scenario.horizon):
        u = scenario.controls[t]
        z = scenario.observations[t]
        obs_model = (
            scenario.obs_for_step(t) if scenario.obs_for_step is not None else scenario.models.observation
        )
        est = None
        ess = np.nan
        n_iters = np.nan
        tic = time.perf_counter()
        try:
            if failed_at is not None:
                raise _AlreadyFailed()
            if ftype == "kalman":
                mean, cov = lingauss_step_oracle(model, mean, cov, u, z)
                est = mean
            elif ftype == "spf":
                state = spf_predict(state, u, scenario.models.transition, RngStream(fcfg.seed))
                if z is not None:
                    state = spf_update(state, z, obs_model, fcfg)
                    n_iters = fcfg.n_iterations
                est = _estimate(state)
                ess = float(state.n)
            else:  # pf
                state = pf_step(state, u, z, ModelPair(scenario.models.transition, obs_model), pf_rng)
                est = _estimate(state)
                ess = state.diagnostics.get("ess", float(state.n))
        except _AlreadyFailed:
            pass
        except (FloatingPointError, np.linalg.LinAlgError):
            failed_at = t if failed_at is None else failed_at
        toc = time.perf_counter()

        row = {
            "repeat": repeat,
            "t": t,
            "filter": name,
            "error_norm": np.nan,
            "rmse_to_date": np.nan,
            "ess": ess,
            "ms_update": (toc - tic) * 1e3 if failed_at is None else np.nan,
            "ms_per_iter": (toc - tic) * 1e3 / n_iters if n_iters == n_iters else np.nan,
            "mode_coverage": np.nan,
            "est": None if est is None else [float(v) for v in est],
        }
        if failed_at is None and est is not None:
            diff = est - scenario.truth[t]
            if period is not None:
                per = period
                wrap = per > 0
                diff = diff.copy()
                diff[wrap] = (diff[wrap] + per[wrap] / 2) % per[wrap] - per[wrap] / 2
            if dims is not None:
                diff = diff[list(dims)]
            err = float(np.linalg.norm(diff))
            errors.append(err)
            estimates.append(est)
            times.append(row["ms_update"])
            if n_iters == n_iters:
                iter_times.append(row["ms_per_iter"])
            row["error_norm"] = err
            row["rmse_to_date"] = float(np.sqrt(np.mean(np.square(errors))))
            if is_grid and ftype != "kalman":
                pos_err = np.linalg.norm(
                    state.particles.states[:, :2] - scenario.truth[t][:2], axis=1
                )
                row["mode_coverage"] = float(np.mean(pos_err <= success_radius))
        rows.append(row)

    final_error = errors[-1] if errors and failed_at is None else np.nan
    return {
        "filter": name,
        "repeat": repeat,
        "rows": rows,
        "rmse": float(np.sqrt(np.mean(np.square(errors)))) if errors else np.nan,
        "errors": errors,
        "final_error": final_error,
        "ms_update_median": float(np.median(times)) if times else np.nan,
        "ms_per_iter_median": float(np.median(iter_times)) if iter_times else np.nan,
        "failed": failed_at is not None,
        "observation_digest": scenario.observation_digest(),
        "estimate_digest": _digest_estimates(estimates),
    }


class _AlreadyFailed(Exception):
    pass


def _digest_estimates(estimates: Sequence[np.ndarray]) -> str:
    import hashlib

    h = hashlib.sha256()
    for e in estimates:
        h.update(np.asarray(e, dtype=np.float64).tobytes())
    return h.hexdigest()


def _fmt(value) -> str:
    if isinstance(value, float):
        if value != value:
            return ""
        return repr(value)
    return str(value)


def run_scenario(cfg: ScenarioConfig, out_dir=None, threads: int = 1) -> Dict:
    """Execute all (repeat, filter) cells and assemble ordered results.

    Returns the summary dict; with ``out_dir`` set also writes
    ``rows.csv``, ``summary.json``, and ``plot.csv``.
    """
    tasks = [(r, fi) for r in range(cfg.repeats) for fi in range(len(cfg.filters))]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_one_filter, cfg, r, fi) for r, fi in tasks]
            results = [f.result() for f in futures]
    else:
        results = [_run_one_filter(cfg, r, fi) for r, fi in tasks]

    by_cell = {(res["repeat"], res["filter"]): res for res in results}
    ordered = [by_cell[(r, cfg.filters[fi]["name"])] for r, fi in tasks]

    # All filters within one repeat saw identical observations.
    for r in range(cfg.repeats):
        digests = {res["observation_digest"] for res in ordered if res["repeat"] == r}
        if len(digests) != 1:
            raise RuntimeError(f"observation sequences diverged within repeat {r}")

    summary = {"scenario": cfg.scenario, "seed": cfg.seed, "repeats": cfg.repeats, "filters": {}}
    for f in cfg.filters:
        name = f["name"]
        cell = [res for res in ordered if res["filter"] == name]
        rmses = np.array([res["rmse"] for res in cell if not res["failed"]])
        pooled = np.concatenate([res["errors"] for res in cell]) if cell else np.array([])
        entry = {
            "rmse_mean": float(rmses.mean()) if rmses.size else None,
            "rmse_std": float(rmses.std()) if rmses.size else None,
            "q10": float(quantiles(pooled, [0.1])[0]) if pooled.size else None,
            "q90": float(quantiles(pooled, [0.9])[0]) if pooled.size else None,
            "ms_update_median": float(
                np.nanmedian([res["ms_update_median"] for res in cell])
            ),
            "failures": int(sum(res["failed"] for res in cell)),
        }
        iter_meds = [res["ms_per_iter_median"] for res in cell if res["ms_per_iter_median"] == res["ms_per_iter_median"]]
        entry["ms_per_iter_median"] = float(np.median(iter_meds)) if iter_meds else None
        if cfg.scenario.startswith("grid-localize"):
            radius = float(cfg.params.get("success_radius", 2.0))
            finals = [res["final_error"] for res in cell]
            entry["successes"] = int(
                sum(1 for e in finals if e == e and e <= radius)
            )
        summary["filters"][name] = entry

    if cfg.scenario == "lingauss-verify" and any(f["type"] == "kalman" for f in cfg.filters):
        kal_name = next(f["name"] for f in cfg.filters if f["type"] == "kalman")
        gaps = {}
        for f in cfg.filters:
            if f["name"] == kal_name:
                continue
            per_repeat = []
            for r in range(cfg.repeats):
                a = by_cell[(r, f["name"])]
                b = by_cell[(r, kal_name)]
                if a["failed"] or b["failed"]:
                    continue
                sq = [
                    np.sum((np.array(ra["est"]) - np.array(rb["est"])) ** 2)
                    for ra, rb in zip(a["rows"], b["rows"])
                    if ra["est"] is not None and rb["est"] is not None
                ]
                if sq:
                    per_repeat.append(float(np.sqrt(np.mean(sq))))
            gaps[f["name"]] = float(np.mean(per_repeat)) if per_repeat else None
        summary["mean_gap_to_kalman"] = gaps

    all_rows = [row for res in ordered for row in res["rows"]]
    summary["row_count"] = len(all_rows)
    summary["observation_digests"] = sorted(
        {res["observation_digest"] for res in ordered}
    )

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        dim = max(
            (len(row["est"]) for row in all_rows if row["est"] is not None), default=0
        )
        est_fields = [f"est_{i}" for i in range(dim)]
        with open(out / "rows.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(ROW_FIELDS) + est_fields)
            for row in all_rows:
                est = row["est"] if row["est"] is not None else [np.nan] * dim
                writer.writerow(
                    [_fmt(row[k]) for k in ROW_FIELDS] + [_fmt(v) for v in est]
                )
        with open(out / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(out / "plot.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["repeat", "t", "filter", "metric", "value"])
            for row in all_rows:
                for metric in ("error_norm", "rmse_to_date", "ess", "ms_update"):
                    if row[metric] == row[metric]:
                        writer.writerow(
                            [row["repeat"], row["t"], row["filter"], metric, _fmt(row[metric])]
                        )
    return summary


SWEEP_AXES = ("dimension", "particle-count")


def sweep(
    cfg: ScenarioConfig,
    axis: str,
    values: Sequence,
    out_dir=None,
    threads: int = 1,
) -> List[Dict]:
    """Run the scenario once per axis value; one summary row per value."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    if len(values) == 0:
        raise ValueError("sweep needs at least one value")
    table = []
    for value in values:
        params = dict(cfg.params)
        filters = [dict(f) for f in cfg.filters]
        if axis == "dimension":
            if cfg.scenario == "sine-bank":
                if int(value) % 2 != 0:
                    raise ValueError("sine-bank dimension must be even (2 per function)")
                params["n_fns"] = int(value) // 2
            else:
                params["dim"] = int(value)
        else:
            for f in filters:
                if f["type"] != "kalman":
                    f["n_particles"] = int(value)
        sub = ScenarioConfig(
            scenario=cfg.scenario,
            filters=filters,
            horizon=cfg.horizon,
            repeats=cfg.repeats,
            seed=cfg.seed,
            params=params,
        )
        summary = run_scenario(sub, out_dir=None, threads=threads)
        for f in filters:
            entry = summary["filters"][f["name"]]
            table.append(
                {
                    "axis_value": value,
                    "filter": f["name"],
                    "rmse_mean": entry["rmse_mean"],
                    "rmse_std": entry["rmse_std"],
                    "q10": entry["q10"],
                    "q90": entry["q90"],
                    "ms_update_median": entry["ms_update_median"],
                }
            )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = ["axis_value", "filter", "rmse_mean", "rmse_std", "q10", "q90", "ms_update_median"]
            writer.writerow(header)
            for row in table:
                writer.writerow([_fmt(row[k]) if isinstance(row[k], float) else row[k] for k in header])
    return table
