"""
Trajectory optimization service for the PhysMotion pipeline.
Searches control-spline coefficients with CMA-ES so the simulated motion
matches the kinematic evidence, window by window over a sequence.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from config import KNOT_INTERVAL, WINDOW_LENGTH, WINDOW_OVERLAP
from enums import WindowMode
from exceptions import ContractError, OptimizationFailedError, SimulationDivergedError
from motion.models import BodyModel, GroundPlane, MotionClip, ObservationSequence, SimState
from services import control_spline
from services.clips import clip_from_observations, concatenate_clips, kinematic_state, slice_clip
from services.cmaes import CmaConfig, CmaResult, IterationRecord, cmaes_minimize
from services.control_spline import ControlTrajectory
from services.objectives import (
    LossBreakdown, ObjectiveTargets, ObjectiveWeights, PosePrior, QuadraticPosePrior, total_loss,
)
from services.run_log import IterationLog
from services.simulator import SimConfig, simulate
from utils.logger import log_with_context, logger

MIN_WINDOW_FRAMES = 4


# ==================== Windows ====================

@dataclass(frozen=True)
class Window:
    index: int
    start: int      # first frame
    stop: int       # one past the last frame
    fps: float

    @property
    def start_time(self) -> float:
        return self.start / self.fps

    @property
    def n_frames(self) -> int:
        return self.stop - self.start

    @property
    def duration(self) -> float:
        return (self.n_frames - 1) / self.fps


@dataclass(frozen=True)
class WindowPlan:
    """Overlapping temporal windows; defaults are 1 s windows with 0.25 s overlap."""
    window_length: float = WINDOW_LENGTH
    overlap: float = WINDOW_OVERLAP
    mode: WindowMode = WindowMode.SEQUENTIAL
    knot_interval: float = KNOT_INTERVAL

    def __post_init__(self):
        object.__setattr__(self, "mode", WindowMode(self.mode))
        if not self.window_length > 0:
            raise ContractError("window_length must be positive")
        if not 0 <= self.overlap < self.window_length:
            raise ContractError("overlap must lie in [0, window_length)")
        if not self.knot_interval > 0:
            raise ContractError("knot_interval must be positive")

    @classmethod
    def from_run_config(cls, section) -> "WindowPlan":
        return cls(window_length=section.length, overlap=section.overlap,
                   mode=section.mode, knot_interval=section.knot_interval)

    def windows(self, n_frames: int, fps: float) -> List[Window]:
        """
        Window i starts at frame round(i * (length - overlap) * fps); windows
        are added while the previous one ends before the last frame. A final
        window shorter than 4 frames is moved back to keep 4 frames.
        """
        if n_frames < MIN_WINDOW_FRAMES:
            raise ContractError(f"Need at least {MIN_WINDOW_FRAMES} frames, got {n_frames}")
        length = max(int(round(self.window_length * fps)), MIN_WINDOW_FRAMES - 1)
        hop = (self.window_length - self.overlap) * fps
        out: List[Window] = []
        start = 0
        while True:
            last = min(start + length, n_frames - 1)
            first = min(start, last - (MIN_WINDOW_FRAMES - 1))
            out.append(Window(len(out), first, last + 1, fps))
            if last >= n_frames - 1:
                return out
            start = max(int(round(len(out) * hop)), first + 1)


# ==================== Rollout objective ====================

@dataclass(frozen=True, eq=False)
class RolloutObjective:
    """Loss of the motion simulated from s0 under a coefficient vector."""
    model: BodyModel
    s0: SimState
    template: ControlTrajectory
    sim: SimConfig
    targets: ObjectiveTargets
    weights: ObjectiveWeights
    prior: PosePrior
    time_offset: float = 0.0

    @property
    def duration(self) -> float:
        return self.template.duration

    def rollout(self, x: np.ndarray) -> MotionClip:
        controls = control_spline.unflatten(self.template, x)
        return simulate(self.model, self.s0, controls, self.duration, self.sim,
                        fps=self.targets.fps, time_offset=self.time_offset)

    def breakdown(self, x: np.ndarray) -> Tuple[MotionClip, LossBreakdown]:
        clip = self.rollout(x)
        return clip, total_loss(clip, self.targets, self.weights, self.prior)

    def evaluate(self, x: np.ndarray) -> Tuple[float, Optional[Dict[str, float]]]:
        """(loss, per-term breakdown); a diverged rollout scores +inf."""
        try:
            _, b = self.breakdown(x)
        except SimulationDivergedError:
            return np.inf, None
        return b.total, b.to_dict()

    def __call__(self, x: np.ndarray) -> float:
        return self.evaluate(x)[0]


_installed: Optional[RolloutObjective] = None


def _install(objective: RolloutObjective) -> None:
    global _installed
    _installed = objective


def _evaluate_installed(x: np.ndarray) -> Tuple[float, Optional[Dict[str, float]]]:
    return _installed.evaluate(x)


class RolloutEvaluator:
    """
    Batch evaluator for cmaes_minimize. With workers > 1 a process pool holds
    one copy of the objective per worker; map order keeps results
    deterministic. Remembers the breakdown of the best candidate seen.
    """

    def __init__(self, objective: RolloutObjective, workers: int = 1):
        self.objective = objective
        self.workers = max(1, int(workers))
        self.pool: Optional[ProcessPoolExecutor] = None
        self.best_loss = np.inf
        self.best_terms: Dict[str, float] = {}
        self.diverged = 0

    def __enter__(self) -> "RolloutEvaluator":
        if self.workers > 1:
            self.pool = ProcessPoolExecutor(max_workers=self.workers, initializer=_install,
                                            initargs=(self.objective,))
        return self

    def __exit__(self, *exc) -> None:
        if self.pool is not None:
            self.pool.shutdown()
            self.pool = None

    def __call__(self, f, xs: List[np.ndarray]) -> List[float]:
        if self.pool is not None:
            chunk = max(1, len(xs) // self.workers)
            results = list(self.pool.map(_evaluate_installed, xs, chunksize=chunk))
        else:
            results = [self.objective.evaluate(x) for x in xs]
        losses = []
        for loss, terms in results:
            if terms is None:
                self.diverged += 1
            elif loss < self.best_loss:
                self.best_loss, self.best_terms = loss, terms
            losses.append(loss)
        return losses


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


# ==================== Window results ====================

@dataclass
class WindowResult:
    """Outcome of one window; failed windows carry their kinematic fallback."""
    window: Window
    controls: ControlTrajectory
    clip: MotionClip
    breakdown: Optional[LossBreakdown]
    initial_loss: float
    cma: Optional[CmaResult] = None
    failed: bool = False

    @property
    def final_loss(self) -> float:
        return self.breakdown.total if self.breakdown is not None else np.inf

    def report(self) -> Dict:
        return {
            "window": self.window.index,
            "start_frame": self.window.start,
            "stop_frame": self.window.stop,
            "start_time": self.window.start_time,
            "initial_loss": _finite_or_none(self.initial_loss),
            "final_loss": _finite_or_none(self.final_loss),
            "terms": self.breakdown.to_dict() if self.breakdown is not None else {},
            "iterations": len(self.cma.history) if self.cma else 0,
            "evaluations": self.cma.evaluations if self.cma else 0,
            "stop_reason": self.cma.stop_reason if self.cma else "",
            "failed": self.failed,
        }


def initial_controls(obs: ObservationSequence, knot_interval: float,
                     start_time: float = 0.0) -> ControlTrajectory:
    """Spline through the kinematic joint angles of an observation slice."""
    poses = np.stack([s.q for s in obs.kinematic_poses])
    return control_spline.fit_to_samples(poses, obs.fps, knot_interval, start_time=start_time)


def optimize_window(model: BodyModel, obs: ObservationSequence, plane: GroundPlane, s0: SimState,
                    init_controls: ControlTrajectory, weights: ObjectiveWeights, cma: CmaConfig,
                    sim: SimConfig, prior: Optional[PosePrior] = None, window_index: int = 0,
                    iteration_log: Optional[IterationLog] = None, workers: int = 1) -> WindowResult:
    """
    CMA-ES over the flattened coefficients of init_controls. The returned
    clip is the rollout of the returned controls and its loss never exceeds
    the loss of the initialization.

    Raises:
        ContractError: s0 or controls inconsistent with the model or window
        OptimizationFailedError: every rollout diverged
    """
    s0.check_model(model)
    if init_controls.dof_count != model.dof_count:
        raise ContractError(f"Controls have {init_controls.dof_count} DOF, model has {model.dof_count}")
    window_duration = (len(obs) - 1) / obs.fps
    if abs(init_controls.duration - window_duration) > 1e-9:
        raise ContractError(f"Controls span {init_controls.duration} s, window spans {window_duration} s")
    if abs(sim.ground.transform - plane.transform).max() > 1e-12:
        sim = replace(sim, ground=plane)
    prior = prior or QuadraticPosePrior.identity(model.dof_count)
    objective = RolloutObjective(model, s0, init_controls, sim,
                                 ObjectiveTargets.from_observations(model, obs), weights, prior,
                                 time_offset=init_controls.start_time)
    x0 = control_spline.flatten(init_controls)

    with RolloutEvaluator(objective, workers) as evaluator:
        def on_iteration(record: IterationRecord) -> None:
            if iteration_log is not None:
                iteration_log.write(window_index, record, evaluator.best_terms)

        result = cmaes_minimize(objective, x0, cma, evaluate_batch=evaluator, callback=on_iteration)

    initial_loss = result.f_start
    if not np.isfinite(result.f_best):
        raise OptimizationFailedError(
            "every rollout diverged", window=window_index,
            diagnostics={"evaluations": result.evaluations, "diverged": evaluator.diverged})
    controls = control_spline.unflatten(init_controls, result.x_best)
    clip, breakdown = objective.breakdown(result.x_best)
    log_with_context(logger, "INFO",
                     f"Window loss {initial_loss:.6g} -> {breakdown.total:.6g} "
                     f"({result.evaluations} rollouts, {evaluator.diverged} diverged, {result.stop_reason})",
                     window=window_index, iteration=len(result.history))
    return WindowResult(Window(window_index, 0, len(obs), obs.fps), controls, clip, breakdown,
                        float(initial_loss), result)


# ==================== Sequences ====================

@dataclass(frozen=True, eq=False)
class CrossFade:
    """
    Window controls whose tail blends linearly into the next window's
    controls: weight 0 at fade_start, 1 at the end of the window.
    """
    head: ControlTrajectory
    tail: ControlTrajectory
    fade_start: float       # local time in head
    tail_offset: float      # local time in head where tail starts

    @property
    def duration(self) -> float:
        return self.head.duration

    @property
    def dof_count(self) -> int:
        return self.head.dof_count

    def at(self, t: float) -> np.ndarray:
        q = self.head.at(t)
        if t <= self.fade_start:
            return q
        span = self.head.duration - self.fade_start
        alpha = min(1.0, (t - self.fade_start) / span) if span > 0 else 1.0
        other = self.tail.at(min(max(t - self.tail_offset, 0.0), self.tail.duration))
        return (1.0 - alpha) * q + alpha * other


@dataclass
class SequenceResult:
    clip: MotionClip
    windows: List[WindowResult]
    mode: WindowMode

    @property
    def controls(self) -> List[ControlTrajectory]:
        return [w.controls for w in self.windows]

    def report(self) -> Dict:
        return {
            "mode": self.mode.value,
            "frames": len(self.clip),
            "windows": [w.report() for w in self.windows],
            "failed_windows": [w.window.index for w in self.windows if w.failed],
            "total_loss": _finite_or_none(sum(w.final_loss for w in self.windows)),
        }


@dataclass(frozen=True, eq=False)
class _WindowJob:
    """Everything needed to optimize one window (picklable for process pools)."""
    model: BodyModel
    obs: ObservationSequence
    plane: GroundPlane
    window: Window
    s0: SimState
    weights: ObjectiveWeights
    cma: CmaConfig
    sim: SimConfig
    prior: Optional[PosePrior]
    knot_interval: float


def _run_window(job: _WindowJob, iteration_log: Optional[IterationLog] = None,
                workers: int = 1) -> WindowResult:
    w = job.window
    window_obs = job.obs.slice(w.start, w.stop)
    init = initial_controls(window_obs, job.knot_interval, start_time=w.start_time)
    try:
        result = optimize_window(job.model, window_obs, job.plane, job.s0, init, job.weights,
                                 job.cma, job.sim, job.prior, window_index=w.index,
                                 iteration_log=iteration_log, workers=workers)
    except OptimizationFailedError as e:
        log_with_context(logger, "WARNING", f"{e}; falling back to the kinematic initialization",
                         window=w.index)
        clip = slice_clip(clip_from_observations(job.model, job.obs, job.plane), w.start, w.stop)
        return WindowResult(w, init, clip, None, np.inf, failed=True)
    result.window = w
    return result


def _map_windows(jobs: List[_WindowJob], workers: int) -> List[WindowResult]:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            return list(pool.map(_run_window, jobs))
    return [_run_window(job) for job in jobs]


def optimize_sequence(model: BodyModel, obs: ObservationSequence, plane: GroundPlane,
                      weights: ObjectiveWeights, plan: WindowPlan, cma: CmaConfig, sim: SimConfig,
                      prior: Optional[PosePrior] = None, iteration_log: Optional[IterationLog] = None,
                      workers: int = 1) -> SequenceResult:
    """
    Optimize overlapping windows and join them into one clip.

    sequential: window i+1 starts from the simulated state of window i at
    its start frame; window i contributes frames up to that start frame.
    parallel-join: windows start from the kinematics and run concurrently;
    each window's tail cross-fades into the next window's controls over the
    overlap, is re-simulated, and contributes frames up to the last frame of
    the overlap.

    A window whose rollouts all diverge falls back to its kinematic poses
    and is flagged in the report.
    """
    windows = plan.windows(len(obs), obs.fps)
    sim = replace(sim, ground=plane)
    logger.info(f"Optimizing {len(obs)} frames in {len(windows)} window(s), mode={plan.mode.value}")

    if plan.mode == WindowMode.SEQUENTIAL or len(windows) == 1:
        results: List[WindowResult] = []
        s0 = kinematic_state(obs, 0)
        for w in windows:
            job = _WindowJob(model, obs, plane, w, s0, weights, cma, sim, prior, plan.knot_interval)
            result = _run_window(job, iteration_log, workers)
            results.append(result)
            if w.index + 1 < len(windows):
                nxt = windows[w.index + 1]
                s0 = (kinematic_state(obs, nxt.start) if result.failed
                      else result.clip.states[nxt.start - w.start])
        pieces = []
        for i, r in enumerate(results):
            stop = windows[i + 1].start if i + 1 < len(windows) else r.window.stop
            pieces.append(slice_clip(r.clip, 0, stop - r.window.start))
        return SequenceResult(concatenate_clips(pieces), results, plan.mode)

    jobs = [_WindowJob(model, obs, plane, w, kinematic_state(obs, w.start), weights, cma, sim,
                       prior, plan.knot_interval) for w in windows]
    results = _map_windows(jobs, workers)
    if iteration_log is not None:
        for r in results:
            for record in (r.cma.history if r.cma else []):
                iteration_log.write(r.window.index, record)

    pieces = []
    previous_end = 0
    for i, r in enumerate(results):
        w = r.window
        clip = r.clip
        if i + 1 < len(results) and not r.failed and not results[i + 1].failed:
            nxt = results[i + 1].window
            fade = CrossFade(r.controls, results[i + 1].controls,
                             fade_start=nxt.start_time - w.start_time,
                             tail_offset=nxt.start_time - w.start_time)
            try:
                clip = simulate(model, jobs[i].s0, fade, w.duration, sim, fps=obs.fps,
                                time_offset=w.start_time)
            except SimulationDivergedError:
                log_with_context(logger, "WARNING", "Cross-faded rollout diverged; keeping the "
                                 "window's own rollout", window=w.index)
        stop = w.stop - 1 if i + 1 < len(results) else w.stop
        pieces.append(slice_clip(clip, previous_end - w.start, stop - w.start))
        previous_end = stop
    return SequenceResult(concatenate_clips(pieces), results, plan.mode)
