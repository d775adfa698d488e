"""Config-driven experiments: data collection, design, closed-loop runs, reports."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import io
from .lqg import (
    GainPair,
    design_noise_free,
    design_robust,
    estimation_metrics,
    simulate_closed_loop,
)
from .lti_sim import LtiSystem, NoiseSpec, TrajectoryData, collect_offline_data, make_rng
from .riccati import kalman_gain, lqr_gain
from .systems import batch_reactor, rotating_target
from .zonotope import Zonotope, run_set_estimator

logger = logging.getLogger(__name__)

SCENARIOS = ("BatchReactorNoiseFree", "BatchReactorNoisy", "RotatingTarget", "Custom")

# Independent random streams derived from one experiment seed.
STREAM_OFFLINE, STREAM_X0, STREAM_ONLINE = 0, 1, 2


def derive_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(stream)]).generate_state(1)[0])


def default_Ew(n_x: int, rank: int) -> np.ndarray:
    """The first ``rank`` columns of the identity (the identity for full rank)."""
    if not 1 <= rank <= n_x:
        raise ValueError(f"rank_Ew must be in [1, {n_x}]")
    return np.eye(n_x)[:, :rank]


class StageError(RuntimeError):
    """An experiment stage failed; ``stage`` names it."""

    def __init__(self, stage: str, seed, cause: Exception):
        super().__init__(f"stage {stage!r} failed for seed {seed}: {cause}")
        self.stage = stage
        self.seed = seed
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "BatchReactorNoiseFree"
    system: Optional[LtiSystem] = None
    Wx: Optional[np.ndarray] = None
    Wu: Optional[np.ndarray] = None
    Nx: Optional[np.ndarray] = None
    Ny: Optional[np.ndarray] = None
    alpha1: float = 0.2
    alpha2: float = 0.2
    T: int = 15
    horizon: int = 100
    seeds: tuple = (0,)
    output_dir: str = "out"
    offline_noise: NoiseSpec = field(default_factory=NoiseSpec)
    online_noise: NoiseSpec = field(default_factory=NoiseSpec)
    design: str = "noise-free"  # or "robust"
    rank_Ew: Optional[int] = None
    zonotope: bool = False
    window: int = 100
    workers: int = 1

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seed list must not be empty")
        if self.design not in ("noise-free", "robust"):
            raise ValueError(f"unknown design {self.design!r}")
        if self.alpha1 <= 0 or self.alpha2 <= 0:
            raise ValueError("alpha1 and alpha2 must be positive")
        if self.T < 1 or self.horizon < 1:
            raise ValueError("T and horizon must be positive")
        for name in ("Wx", "Nx"):
            M = getattr(self, name)
            if M is not None and np.linalg.eigvalsh(0.5 * (M + M.T))[0] < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
        for name in ("Wu", "Ny"):
            M = getattr(self, name)
            if M is not None and np.linalg.eigvalsh(0.5 * (M + M.T))[0] <= 0:
                raise ValueError(f"{name} must be positive definite")

    def with_overrides(self, seed=None, T=None, alpha1=None, alpha2=None, noise_bar=None,
                       output_dir=None, workers=None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seeds=(int(seed),))
        if T is not None:
            cfg = replace(cfg, T=int(T))
        if alpha1 is not None:
            cfg = replace(cfg, alpha1=float(alpha1))
        if alpha2 is not None:
            cfg = replace(cfg, alpha2=float(alpha2))
        if noise_bar is not None:
            nb = float(noise_bar)
            off = cfg.offline_noise
            if off.kind != "zero":
                off = replace(off, kind="uniform", wbar=nb, vbar=nb)
            on = replace(cfg.online_noise, kind="uniform", wbar=nb, vbar=nb)
            cfg = replace(cfg, offline_noise=off, online_noise=on)
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(output_dir))
        if workers is not None:
            cfg = replace(cfg, workers=int(workers))
        return cfg


def scenario_config(name: str, rank_Ew: int = 4, **kw) -> ExperimentConfig:
    """Built-in settings for the named scenario; keyword arguments override."""
    if name == "BatchReactorNoiseFree":
        base = dict(system=batch_reactor(), Wx=np.eye(4), Wu=np.eye(2),
                    Nx=0.02 * np.eye(4), Ny=0.02 * np.eye(2), T=15, horizon=100,
                    offline_noise=NoiseSpec.zero(), online_noise=NoiseSpec.uniform(0.02, 0.02),
                    design="noise-free")
    elif name == "BatchReactorNoisy":
        Ew = default_Ew(4, rank_Ew)
        base = dict(system=batch_reactor(), Wx=np.eye(4), Wu=np.eye(2),
                    Nx=0.02 * np.eye(4), Ny=0.02 * np.eye(2), T=15, horizon=200,
                    alpha1=0.2, alpha2=0.2, rank_Ew=rank_Ew,
                    offline_noise=NoiseSpec.uniform(0.02, 0.02, Ew=Ew),
                    online_noise=NoiseSpec.uniform(0.02, 0.02, Ew=Ew),
                    design="robust")
    elif name == "RotatingTarget":
        base = dict(system=rotating_target(), Wx=np.eye(2), Wu=np.eye(1),
                    Nx=np.eye(2), Ny=np.eye(4), T=50, horizon=100, alpha1=0.2, alpha2=1.0,
                    offline_noise=NoiseSpec.uniform(1.0, 1.0),
                    online_noise=NoiseSpec.uniform(1.0, 1.0),
                    design="robust", zonotope=True)
    elif name == "Custom":
        base = {}
    else:
        raise ValueError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")
    base.update(kw)
    return ExperimentConfig(scenario=name, **base)


def _mat(v, default=None):
    if v is None:
        return default
    return np.atleast_2d(np.asarray(v, dtype=float))


def config_from_dict(d: dict) -> ExperimentConfig:
    """Build a config from the JSON schema documented in the README.

    A ``scenario`` key selects built-in defaults; any of ``A``, ``B``, ``C``,
    ``noise``, ``online_noise``, ``T``, ``seed``/``seeds``, weights and
    alphas override them. Without ``scenario`` the file must define the plant
    (``Custom``).
    """
    scenario = d.get("scenario", "Custom" if "A" in d else "BatchReactorNoiseFree")
    kw = {}
    if "A" in d:
        kw["system"] = LtiSystem.from_dict(d)
    for key in ("Wx", "Wu", "Nx", "Ny"):
        if key in d:
            kw[key] = _mat(d[key])
    for key in ("alpha1", "alpha2"):
        if key in d:
            kw[key] = float(d[key])
    for key in ("T", "horizon", "window", "workers"):
        if key in d:
            kw[key] = int(d[key])
    if "seeds" in d:
        kw["seeds"] = tuple(int(s) for s in d["seeds"])
    elif "seed" in d:
        kw["seeds"] = (int(d["seed"]),)
    if "output_dir" in d:
        kw["output_dir"] = str(d["output_dir"])
    if "design" in d:
        kw["design"] = d["design"]
    if "zonotope" in d:
        kw["zonotope"] = bool(d["zonotope"])
    rank = int(d.get("rank_Ew", 4))
    if "noise" in d:
        kw["offline_noise"] = NoiseSpec.from_dict(d["noise"])
        kw.setdefault("online_noise", NoiseSpec.from_dict(d.get("online_noise", d["noise"])))
    elif "online_noise" in d:
        kw["online_noise"] = NoiseSpec.from_dict(d["online_noise"])
    cfg = scenario_config(scenario, rank_Ew=rank, **kw) if scenario != "Custom" else None
    if cfg is None:
        if "system" not in kw:
            raise ValueError("a Custom scenario needs A, B and C")
        sys = kw["system"]
        kw.setdefault("Wx", np.eye(sys.n_x))
        kw.setdefault("Wu", np.eye(sys.n_u))
        kw.setdefault("Nx", np.eye(sys.n_x))
        kw.setdefault("Ny", np.eye(sys.n_y))
        if "design" not in kw:
            noisy = kw.get("offline_noise", NoiseSpec()).kind != "zero"
            kw["design"] = "robust" if noisy else "noise-free"
        cfg = ExperimentConfig(scenario="Custom", **kw)
    return cfg


def load_config(path) -> ExperimentConfig:
    return config_from_dict(io.read_json(path))


# -- per-seed pipeline ------------------------------------------------------

def collect(cfg: ExperimentConfig, seed: int) -> TrajectoryData:
    return collect_offline_data(cfg.system, cfg.T, cfg.offline_noise,
                                seed=derive_seed(seed, STREAM_OFFLINE))


def design(cfg: ExperimentConfig, data: TrajectoryData) -> GainPair:
    if cfg.design == "robust":
        return design_robust(data, cfg.Wx, cfg.Wu, cfg.Nx, cfg.Ny, cfg.alpha1, cfg.alpha2)
    return design_noise_free(data, cfg.Wx, cfg.Wu, cfg.Nx, cfg.Ny)


def oracle_gains(cfg: ExperimentConfig):
    sys = cfg.system
    K_bar = lqr_gain(sys.A, sys.B, cfg.Wx, cfg.Wu)
    _, L_bar = kalman_gain(sys.A, sys.C, cfg.Nx, cfg.Ny)
    return K_bar, L_bar


def observer_estimates(sys: LtiSystem, L, u: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Model-based predictor xhat(t+1) = A xhat + B u + L (y - C xhat), xhat(0) = 0."""
    N = y.shape[1]
    xh = np.zeros((sys.n_x, N + 1))
    for t in range(N):
        xh[:, t + 1] = sys.A @ xh[:, t] + sys.B @ u[:, t] + L @ (y[:, t] - sys.C @ xh[:, t])
    return xh


def run_seed(cfg: ExperimentConfig, seed: int) -> dict:
    """Collect, design, simulate for one seed and write ``trace_<seed>.csv``."""
    out = Path(cfg.output_dir)
    try:
        data = collect(cfg, seed)
    except Exception as exc:  # noqa: BLE001 - report the failing stage
        raise StageError("collect", seed, exc) from exc
    try:
        gains = design(cfg, data)
    except Exception as exc:  # noqa: BLE001
        raise StageError("design", seed, exc) from exc
    try:
        ctrl = gains.controller(data)
        x0 = make_rng(derive_seed(seed, STREAM_X0)).uniform(-1.0, 1.0, cfg.system.n_x)
        noise = cfg.online_noise.with_seed(derive_seed(seed, STREAM_ONLINE))
        trace = simulate_closed_loop(cfg.system, ctrl, x0, noise, cfg.horizon,
                                     data=data, split=gains.split)
        io.write_trace_csv(trace, out / f"trace_{seed}.csv")
    except Exception as exc:  # noqa: BLE001
        raise StageError("simulate", seed, exc) from exc
    window = min(cfg.window, trace.steps)
    metrics = estimation_metrics(trace, window=window)
    K_bar, L_bar = oracle_gains(cfg)
    rec = {
        "seed": seed,
        "K": gains.K, "L": gains.L,
        "objectives": gains.objectives,
        "K_err": float(np.linalg.norm(gains.K - K_bar, 2)),
        "L_err": float(np.linalg.norm(gains.L - L_bar, 2)),
        "rho_xi0": trace.composite.rho_xi0 if trace.composite else None,
        "similarity_residual": trace.composite.similarity_residual if trace.composite else None,
        "diverged": trace.diverged,
        "max_state_norm": float(np.max(np.linalg.norm(trace.x[:, :trace.steps], axis=0))),
        "ebar": metrics.ebar,
        "decay_slope": metrics.decay_slope,
        "per_step_time": metrics.per_step_time,
    }
    if cfg.zonotope:
        try:
            rec.update(_baselines(cfg, data, trace, window, seed))
        except Exception as exc:  # noqa: BLE001
            raise StageError("baselines", seed, exc) from exc
    return rec


def _baselines(cfg, data, trace, window, seed) -> dict:
    """Zonotope-center and true-model Kalman estimates on the closed-loop record."""
    sys = cfg.system
    on = cfg.online_noise
    Zw = Zonotope.box(np.zeros(sys.n_x), on.wbar)
    Zv = Zonotope.box(np.zeros(sys.n_y), on.vbar)
    X0 = Zonotope.box(np.zeros(sys.n_x), 1.0)
    t0 = time.perf_counter()
    est = run_set_estimator(data, Zw, Zv, X0, trace.u, trace.y)
    zono_time = (time.perf_counter() - t0) / trace.steps
    centers = est.centers
    io.write_estimate_csv(range(centers.shape[1]), centers,
                          Path(cfg.output_dir) / f"zonotope_{seed}.csv")
    ez = np.linalg.norm(centers - trace.x[:, :centers.shape[1]], axis=0)
    # the oracle runs on the same noise statistics as uniform components
    Nx = np.eye(sys.n_x) * max(on.wbar, 1e-12) ** 2 / 3.0
    Ny = np.eye(sys.n_y) * max(on.vbar, 1e-12) ** 2 / 3.0
    _, L_or = kalman_gain(sys.A, sys.C, Nx, Ny)
    xk = observer_estimates(sys, L_or, trace.u, trace.y)
    ek = np.linalg.norm(xk - trace.x, axis=0)
    return {
        "ebar_zonotope": float(np.mean(ez[:window])),
        "ebar_oracle_kalman": float(np.mean(ek[:window])),
        "per_step_time_zonotope": zono_time,
    }


@dataclass(frozen=True)
class ExperimentReport:
    summary: dict
    records: list
    output_dir: Path


def _run_seed_star(args):
    return run_seed(*args)


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run every seed, then write ``gains.json`` and ``summary.json``."""
    if cfg.system is None:
        raise ValueError("configuration has no plant")
    out = io.ensure_dir(cfg.output_dir)
    records, errors = [], []
    jobs = [(cfg, s) for s in cfg.seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            futures = [ex.submit(_run_seed_star, j) for j in jobs]
            for f in futures:
                try:
                    records.append(f.result())
                except StageError as exc:
                    errors.append(exc)
    else:
        for j in jobs:
            try:
                records.append(run_seed(*j))
            except StageError as exc:
                errors.append(exc)
    K_bar, L_bar = oracle_gains(cfg)
    io.write_json({"K_bar": K_bar, "L_bar": L_bar,
                   "per_seed": {str(r["seed"]): {"K": r["K"], "L": r["L"]} for r in records}},
                  out / "gains.json")
    summary = summarize(cfg, records, errors)
    io.write_json(summary, out / "summary.json")
    return ExperimentReport(summary, records, out)


PER_SEED_KEYS = ("ebar", "decay_slope", "rho_xi0", "similarity_residual", "K_err", "L_err",
                 "diverged", "max_state_norm", "per_step_time", "ebar_zonotope",
                 "ebar_oracle_kalman", "per_step_time_zonotope")


def summarize(cfg: ExperimentConfig, records: list, errors: list) -> dict:
    def stat(key):
        vals = np.array([r[key] for r in records if r.get(key) is not None], dtype=float)
        if not len(vals):
            return None
        return {"mean": float(vals.mean()), "std": float(vals.std()),
                "min": float(vals.min()), "max": float(vals.max())}

    stable = [r for r in records if r["rho_xi0"] is not None and r["rho_xi0"] < 1 and not r["diverged"]]
    summary = {
        "scenario": cfg.scenario,
        "design": cfg.design,
        "T": cfg.T,
        "horizon": cfg.horizon,
        "seeds": list(cfg.seeds),
        "alpha1": cfg.alpha1,
        "alpha2": cfg.alpha2,
        "offline_noise": {"kind": cfg.offline_noise.kind, "wbar": cfg.offline_noise.wbar,
                          "vbar": cfg.offline_noise.vbar},
        "online_noise": {"kind": cfg.online_noise.kind, "wbar": cfg.online_noise.wbar,
                         "vbar": cfg.online_noise.vbar},
        "rank_Ew": cfg.rank_Ew,
        "n_ok": len(records),
        "n_stable": len(stable),
        "ebar": stat("ebar"),
        "rho_xi0": stat("rho_xi0"),
        "K_err": stat("K_err"),
        "L_err": stat("L_err"),
        "similarity_residual": stat("similarity_residual"),
        "decay_slope": stat("decay_slope"),
        "per_step_time": stat("per_step_time"),
        "errors": [{"seed": e.seed, "stage": e.stage, "message": str(e.cause)} for e in errors],
    }
    scalar_keys = [k for k in PER_SEED_KEYS if any(k in r for r in records)]
    summary["per_seed"] = [{k: r.get(k) for k in ["seed"] + scalar_keys}
                           for r in sorted(records, key=lambda r: r["seed"])]
    if cfg.zonotope:
        summary["ebar_zonotope"] = stat("ebar_zonotope")
        summary["ebar_oracle_kalman"] = stat("ebar_oracle_kalman")
        summary["per_step_time_zonotope"] = stat("per_step_time_zonotope")
    return summary
