"""
Commands - estimate, map, sweep, diagnose and oracle-suite

Repetitions and sweep points run through a process pool when more than one worker is
requested. Workers receive the configuration as a plain dict, rebuild their problem from
the repetition seed and write only into their own directory.
"""

import asyncio
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from core.errors import ArtifactError, ConfigError, DivergenceError
from core.models import eval_log_posterior_unnorm
from experiments.config import ExperimentConfig
from experiments.problems import Problem, build_problem
from map_estimation.solver import evaluate, solve_map
from oracle.suite import run_oracle_checks
from sampler.diagnostics import (
    autocorrelation,
    effective_sample_size,
    imbalance_ratio,
    integrated_autocorr_time,
    is_stabilised,
)
from sampler.myula import POSTERIOR, PRIOR, ChainState, run_chain
from sapg.runner import SapgConfig, SapgRunner
from sapg.trace import grad_residual_windows
from storage.artifacts import ArtifactWriter, read_csv, read_json, repetition_dir
from transforms.io import read_raw
from utils.helpers import log_grid, repetition_seed, seed_label, split_seed

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4

STREAMS = ("data", "chains", "diagnose")


# shared plumbing

def _config(payload: Dict) -> ExperimentConfig:
    return ExperimentConfig.model_validate(payload)


def _streams(config: ExperimentConfig, repetition: int):
    seed = repetition_seed(config.master_seed, repetition)
    return seed, split_seed(seed, STREAMS)


def _writer(config: ExperimentConfig, directory: Path, seed) -> ArtifactWriter:
    return ArtifactWriter(directory, config.hash(), seed_label(seed))


def _require_estimable(config: ExperimentConfig):
    if not config.estimable:
        raise ConfigError([("custom.regulariser",
                            f"'{config.custom.regulariser}' has no parameter to estimate; use map or sweep")])


def _sapg_config(config: ExperimentConfig, problem: Problem) -> SapgConfig:
    if not problem.sapg_updates:
        return config.sapg
    return SapgConfig.model_validate({**config.sapg.model_dump(), **problem.sapg_updates})


async def _dispatch(fn: Callable, jobs: Sequence[tuple], workers: int) -> List:
    """Run ``fn(*job)`` for every job; in-process when workers <= 1"""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    loop = asyncio.get_running_loop()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(await asyncio.gather(*(loop.run_in_executor(pool, fn, *job) for job in jobs)))


def _theta_source(config: ExperimentConfig, repetition: int, theta_override: Optional[Sequence[float]]):
    """(theta, sigma2 estimate or None) from the override or the repetition's summary.json"""
    summary_path = repetition_dir(config.output_dir, repetition) / "summary.json"
    summary = read_json(summary_path) if summary_path.exists() else {}
    if theta_override is not None:
        theta = np.asarray(theta_override, dtype=float)
    elif "theta_bar" in summary:
        theta = np.asarray(summary["theta_bar"], dtype=float)
    else:
        raise ArtifactError(
            f"No theta for repetition {repetition}: pass --theta or run estimate first ({summary_path})"
        )
    return theta, summary.get("sigma2_bar")


# estimate

def estimate_repetition(payload: Dict, repetition: int) -> int:
    config = _config(payload)
    seed, streams = _streams(config, repetition)
    problem = build_problem(config, streams["data"])
    writer = _writer(config, repetition_dir(config.output_dir, repetition), seed)
    writer.write_image("ground_truth", problem.ground_truth)
    writer.write_image("observation", problem.observation)

    runner = SapgRunner(_sapg_config(config, problem), problem.model, x0=problem.x0, seed=streams["chains"])
    started = time.perf_counter()
    try:
        result = runner.run()
    except DivergenceError as e:
        writer.write_divergence(e)
        if runner.state is not None:
            writer.write_csv("theta_trace.csv", runner.state.trace.to_frame())
        writer.write_timing(time.perf_counter() - started)
        return EXIT_DIVERGENCE
    elapsed = time.perf_counter() - started

    frame = pd.concat([trace.to_frame() for trace in result.traces], ignore_index=True)
    writer.write_csv("theta_trace.csv", frame)
    summary = result.summary()
    summary.update({
        "problem": config.problem,
        "algorithm": config.algorithm,
        "dim": int(np.prod(problem.model.shape)),
        "true_sigma2": problem.sigma2,
        "input_psnr": problem.input_psnr(),
    })
    if problem.true_theta is not None:
        summary["true_theta"] = problem.true_theta
    writer.write_json("summary.json", summary)
    for name, chain in result.state.chains.items():
        writer.write_array(f"chain_{name}", chain.x, problem.domain_tag)
    writer.write_timing(elapsed)
    logger.info(f"Repetition {repetition}: theta_bar={result.theta_bar} -> {writer.directory}")
    return EXIT_OK


async def cmd_estimate(config: ExperimentConfig, workers: int = 1) -> int:
    _require_estimable(config)
    payload = config.model_dump(mode="json")
    statuses = await _dispatch(estimate_repetition, [(payload, r) for r in range(config.repetitions)], workers)
    failed = [r for r, status in enumerate(statuses) if status != EXIT_OK]
    if failed:
        logger.error(f"Repetitions {failed} diverged; see divergence.json in their directories")
        return EXIT_DIVERGENCE
    return EXIT_OK


# map

def map_repetition(payload: Dict, repetition: int, theta_override: Optional[List[float]] = None) -> Dict:
    config = _config(payload)
    theta, sigma2_bar = _theta_source(config, repetition, theta_override)
    seed, streams = _streams(config, repetition)
    problem = build_problem(config, streams["data"])
    model = problem.posterior(sigma2_bar)
    if theta.size != model.regulariser.n_params:
        raise ConfigError([("--theta", f"expected {model.regulariser.n_params} value(s), got {theta.size}")])

    result = solve_map(model, theta, y=problem.x0, tol=config.map.tol, max_iters=config.map.max_iters)
    image = problem.to_image(result.x_hat)
    metrics = evaluate(image, problem.ground_truth)
    metrics.update({
        "theta": theta,
        "input_psnr": problem.input_psnr(),
        "iterations": result.iterations,
        "converged": result.converged,
        "residual": result.residual,
        "restarts": result.restarts,
    })

    writer = _writer(config, repetition_dir(config.output_dir, repetition), seed)
    truth = problem.ground_truth
    writer.write_image("reconstruction", image, value_range=(float(truth.min()), float(truth.max())))
    writer.write_csv("map_objective.csv", pd.DataFrame({
        "iteration": np.arange(len(result.objective_trace)),
        "objective": result.objective_trace,
    }))
    writer.write_json("metrics.json", metrics)
    logger.info(f"Repetition {repetition}: MAP psnr={metrics['psnr']:.2f} dB at theta={theta}")
    return metrics


async def cmd_map(config: ExperimentConfig, theta_override: Optional[List[float]] = None, workers: int = 1) -> int:
    payload = config.model_dump(mode="json")
    jobs = [(payload, r, theta_override) for r in range(config.repetitions)]
    await _dispatch(map_repetition, jobs, workers)
    return EXIT_OK


# sweep

def sweep_point(payload: Dict, theta: float, sigma2: Optional[float]) -> Dict:
    """MAP error at one theta, on repetition 0's data"""
    config = _config(payload)
    _, streams = _streams(config, 0)
    problem = build_problem(config, streams["data"])
    result = solve_map(problem.posterior(sigma2), [theta], y=problem.x0,
                       tol=config.map.tol, max_iters=config.map.max_iters)
    row = {"theta": float(theta)}
    row.update(evaluate(problem.to_image(result.x_hat), problem.ground_truth))
    row.update({"iterations": result.iterations, "converged": result.converged})
    return row


def is_unimodal(values: Sequence[float]) -> bool:
    """True when the sequence has no interior local maximum"""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return True
    return not np.any((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:]))


def sweep_grid(config: ExperimentConfig, theta_grid: Optional[List[float]], theta_bar: Optional[float]) -> List[float]:
    if theta_grid:
        return sorted(float(t) for t in theta_grid)
    if config.sweep.theta:
        return sorted(config.sweep.theta)
    center = config.sweep.center or theta_bar
    if center is None:
        raise ArtifactError("Sweep needs a grid, sweep.center, or an estimate in rep_000/summary.json")
    return log_grid(center, config.sweep.decades, config.sweep.points)


async def cmd_sweep(config: ExperimentConfig, theta_grid: Optional[List[float]] = None, workers: int = 1) -> int:
    summary_path = repetition_dir(config.output_dir, 0) / "summary.json"
    summary = read_json(summary_path) if summary_path.exists() else {}
    theta_bar = summary.get("theta_bar")
    if theta_bar is not None and len(theta_bar) != 1:
        raise ConfigError([("sweep", "theta sweeps need a scalar theta")])
    theta_bar = theta_bar[0] if theta_bar else None
    sigma2 = summary.get("sigma2_bar")

    grid = sweep_grid(config, theta_grid, theta_bar)
    payload = config.model_dump(mode="json")
    rows = await _dispatch(sweep_point, [(payload, t, sigma2) for t in grid], workers)
    frame = pd.DataFrame(rows).sort_values("theta", ignore_index=True)

    best = frame.loc[frame["mse_db"].idxmin()]
    report = {
        "argmin_theta": float(best["theta"]),
        "min_mse_db": float(best["mse_db"]),
        "points": len(frame),
        "unimodal": is_unimodal(frame["mse_db"].to_numpy()),
    }
    if theta_bar is not None:
        at_bar = sweep_point(payload, theta_bar, sigma2)
        report.update({
            "theta_bar": theta_bar,
            "theta_bar_mse_db": at_bar["mse_db"],
            "theta_bar_gap_db": at_bar["mse_db"] - float(best["mse_db"]),
        })

    seed, _ = _streams(config, 0)
    writer = _writer(config, Path(config.output_dir) / "sweep", seed)
    writer.write_csv("sweep.csv", frame)
    writer.write_json("sweep_summary.json", report)
    logger.info(f"Sweep over {len(frame)} points: argmin theta={report['argmin_theta']:.4e}")
    return EXIT_OK


# diagnose

def _acf_frame(series: np.ndarray, max_lag: int) -> pd.DataFrame:
    lags = min(max_lag, series.size - 1)
    try:
        acf = autocorrelation(series, lags)
    except ValueError:
        acf = np.full(lags + 1, np.nan)
    return pd.DataFrame({"lag": np.arange(lags + 1), "acf": acf})


def _tau(series: np.ndarray) -> Optional[float]:
    try:
        return integrated_autocorr_time(series)
    except ValueError:
        return None


def _chain_segment(model, x0, seed, theta, params, steps, thinning=1, target=POSTERIOR) -> np.ndarray:
    """Rows (g_1..g_dTheta, log_prob) of a fixed-theta chain segment"""
    state = ChainState.start(x0, seed, model)

    def record(x):
        return np.append(model.regulariser.statistics(x), eval_log_posterior_unnorm(model, x, theta))

    _, rows = run_chain(model, state, theta, params, steps, thinning=thinning, target=target, record=record)
    return np.array(rows)


def diagnose_repetition(payload: Dict, repetition: int) -> Dict:
    config = _config(payload)
    directory = repetition_dir(config.output_dir, repetition)
    trace = read_csv(directory / "theta_trace.csv")
    seed, streams = _streams(config, repetition)
    writer = _writer(config, directory, seed)

    grad_norms = trace["grad_norm"].to_numpy()
    writer.write_csv("grad_residual.csv", grad_residual_windows(grad_norms, start=0))

    divergence_path = directory / "divergence.json"
    if divergence_path.exists():
        diagnosis = {"diverged": True, "divergence": read_json(divergence_path), "stabilised": False}
        writer.write_json("diagnosis.json", diagnosis)
        return diagnosis

    summary = read_json(directory / "summary.json")
    theta = np.asarray(summary["theta_bar"], dtype=float)
    problem = build_problem(config, streams["data"])
    model = problem.posterior(summary.get("sigma2_bar"))
    runner = SapgRunner(_sapg_config(config, problem), problem.model, x0=problem.x0, seed=streams["chains"])
    params, prior_params = runner.kernel_params(model.likelihood.lipschitz)
    post_seed, prior_seed = streams["diagnose"].spawn(2)

    x_post, _ = read_raw(directory / f"chain_{POSTERIOR}.f64")
    steps, max_lag = config.diagnose.steps, config.diagnose.max_lag
    rows = _chain_segment(model, x_post, post_seed, theta, params, steps)
    n_params = model.regulariser.n_params
    frame = pd.DataFrame({"iteration": np.arange(1, steps + 1)})
    for i in range(n_params):
        frame[f"g_{i + 1}"] = rows[:, i]
    frame["log_prob"] = rows[:, -1]
    writer.write_csv("logprob_trace.csv", frame)

    g_post = rows[:, 0]
    writer.write_csv("acf_posterior.csv", _acf_frame(g_post, max_lag))
    tau_post = _tau(g_post)
    diagnosis = {
        "diverged": False,
        "stabilised": is_stabilised(rows[:, -1]),
        "tau_posterior": tau_post,
        "ess_posterior": effective_sample_size(g_post) if tau_post is not None else None,
        "theta_bar": theta,
        "steps": steps,
    }

    if prior_params is not None:
        x_prior, _ = read_raw(directory / f"chain_{PRIOR}.f64")
        thinning = config.sapg.prior_thinning
        prior_rows = _chain_segment(model, x_prior, prior_seed, theta, prior_params, steps * thinning,
                                    thinning=thinning, target=PRIOR)
        g_prior = prior_rows[:, 0]
        writer.write_csv("acf_prior.csv", _acf_frame(g_prior, max_lag))
        tau_prior = _tau(g_prior)
        diagnosis["tau_prior"] = tau_prior
        diagnosis["prior_thinning"] = thinning
        if tau_post is not None and tau_prior is not None:
            diagnosis["imbalance_ratio"] = imbalance_ratio(g_post, g_prior)

    writer.write_json("diagnosis.json", diagnosis)
    logger.info(f"Repetition {repetition}: stabilised={diagnosis['stabilised']} tau={tau_post}")
    return diagnosis


async def cmd_diagnose(config: ExperimentConfig, workers: int = 1) -> int:
    _require_estimable(config)
    payload = config.model_dump(mode="json")
    results = await _dispatch(diagnose_repetition, [(payload, r) for r in range(config.repetitions)], workers)
    if any(d["diverged"] for d in results):
        logger.warning("Some repetitions diverged; their diagnosis.json carries the divergence record")
    return EXIT_OK


# oracle suite

async def cmd_oracle_suite(output_dir: Path, seed: int = 0) -> int:
    results = await asyncio.get_running_loop().run_in_executor(None, run_oracle_checks, seed)
    writer = ArtifactWriter(Path(output_dir), config_hash="oracle-suite", seed=str(seed))
    passed = all(r.passed for r in results)
    writer.write_json("oracle_report.json", {
        "passed": passed,
        "checks": [r.to_dict() for r in results],
    })
    return EXIT_OK if passed else EXIT_CHECK_FAILED
