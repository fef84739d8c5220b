"""
Pipeline orchestration for the PhysMotion pipeline.
Runs estimate-plane -> refine -> optimize -> evaluate on one observation
file, writing every intermediate artifact and a manifest of SHA-256 content
hashes into a run-scoped output directory.
"""
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

from config import CONTACT_THRESHOLD_KINEMATIC
from enums import Stage
from exceptions import ContractError, PhysMotionError, StageOrderError
from motion import io
from motion.models import BodyModel, GroundPlane, ObservationSequence
from motion.schemas import RunConfigSchema
from services.clips import clip_from_observations
from services.cmaes import CmaConfig
from services.ground_plane import estimate_plane_from_states
from services.kinematic_refine import RefineWeights, refine_trajectory
from services.metrics import contact_artifacts, evaluate_clips
from services.objectives import ObjectiveWeights, PosePrior, QuadraticPosePrior
from services.run_log import IterationLog
from services.simulator import SimConfig
from services.stock_character import build_stock_character
from services.trajectory_optimizer import SequenceResult, WindowPlan, optimize_sequence
from utils.logger import logger

MANIFEST = "manifest.json"


@dataclass(frozen=True)
class RunSettings:
    """A run configuration together with the global command-line flags."""
    config: RunConfigSchema = field(default_factory=RunConfigSchema)
    seed: int = 0
    fast: bool = False
    threads: int = 1
    base_dir: Path = Path(".")

    def resolve(self, path: Optional[str]) -> Optional[Path]:
        """Config paths are relative to the config file's directory."""
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def ground(self, plane: GroundPlane) -> GroundPlane:
        """plane with the configured floor material."""
        section = self.config.plane
        if section.stiffness is None:
            return plane
        return GroundPlane(plane.transform, friction=self.config.sim.friction,
                           stiffness=section.stiffness, damping=section.damping or 0.0)

    def sim(self, plane: GroundPlane, static_boxes=()) -> SimConfig:
        return SimConfig.from_run_config(self.config.sim, self.ground(plane), static_boxes)

    def weights(self) -> ObjectiveWeights:
        return ObjectiveWeights.from_run_config(self.config.weights)

    def cma(self) -> CmaConfig:
        return CmaConfig.from_run_config(self.config.cma, seed=self.seed, fast=self.fast)

    def plan(self) -> WindowPlan:
        return WindowPlan.from_run_config(self.config.windows)

    def refine(self) -> RefineWeights:
        return RefineWeights.from_run_config(self.config.refine)

    def body(self) -> BodyModel:
        path = self.resolve(self.config.body)
        return io.load_body(path) if path is not None else build_stock_character()

    def prior(self, model: BodyModel) -> PosePrior:
        path = self.resolve(self.config.prior)
        return io.load_prior(path) if path is not None else QuadraticPosePrior.identity(model.dof_count)


def file_sha256(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class Manifest:
    """Completed stages and content hashes of every artifact of a run."""
    out_dir: Path
    seed: int
    fast: bool
    stages: List[str] = field(default_factory=list)
    artifacts: Dict[str, str] = field(default_factory=dict)
    failed_stage: Optional[str] = None
    error: Optional[str] = None

    def add(self, path: Path) -> Path:
        self.artifacts[path.relative_to(self.out_dir).as_posix()] = file_sha256(path)
        return path

    def complete(self, stage: Stage) -> None:
        self.stages.append(stage.value)
        self.save()

    def to_dict(self) -> Dict:
        doc = {"version": 1, "seed": self.seed, "fast": self.fast,
               "stages": list(self.stages), "artifacts": dict(sorted(self.artifacts.items()))}
        if self.failed_stage is not None:
            doc["failed_stage"] = self.failed_stage
            doc["error"] = self.error
        return doc

    def save(self) -> Path:
        return io.write_document(self.out_dir / MANIFEST, self.to_dict())


def _save_sequence(out: Path, result: SequenceResult, manifest: Manifest) -> None:
    manifest.add(io.save_clip(out / "optimized_clip.json", result.clip))
    for w in result.windows:
        manifest.add(io.save_controls(out / f"controls_window_{w.window.index:02d}.json", w.controls))
    manifest.add(io.write_document(out / "optimize_report.json", result.report()))


def run_pipeline(settings: RunSettings, out_dir: Union[str, Path], skip_plane: bool = False,
                 contact_threshold: Optional[float] = None) -> Manifest:
    """
    Run every stage in order. With skip_plane the ground plane is read from
    the configured plane file instead of being estimated.

    Raises:
        ContractError: no observations configured
        StageOrderError: the plane stage is skipped but no plane file exists
        PhysMotionError: any stage failure (the manifest records how far the run got)
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, settings.seed, settings.fast)
    obs_path = settings.resolve(settings.config.observations)
    if obs_path is None:
        raise ContractError("The run configuration names no observations file")

    stage = Stage.ESTIMATE_PLANE
    try:
        model = settings.body()
        obs: ObservationSequence = io.load_observations(obs_path)
        manifest.add(io.save_body(out / "body.json", model))

        plane_path = settings.resolve(settings.config.plane_file)
        if skip_plane:
            if plane_path is None or not plane_path.is_file():
                raise StageOrderError(f"'{Stage.REFINE.value}' needs a ground plane: "
                                      f"run '{Stage.ESTIMATE_PLANE.value}' or provide plane_file")
            plane = io.load_plane(plane_path)
            manifest.add(io.save_plane(out / "plane.json", plane))
        else:
            estimate = estimate_plane_from_states(model, obs.kinematic_poses,
                                                  k=settings.config.plane.k,
                                                  delta=settings.config.plane.delta)
            plane = estimate.plane
            manifest.add(io.save_plane(out / "plane.json", plane, estimate.loss,
                                       estimate.identifiable, estimate.converged))
            manifest.complete(stage)

        plane = settings.ground(plane)

        stage = Stage.REFINE
        refined = refine_trajectory(model, obs, plane, settings.refine(),
                                    k=settings.config.plane.k, delta=settings.config.plane.delta)
        manifest.add(io.save_observations(out / "refined_observations.json", refined.observations))
        manifest.complete(stage)

        stage = Stage.OPTIMIZE
        log = IterationLog(out / "iterations.jsonl")
        result = optimize_sequence(model, refined.observations, plane, settings.weights(),
                                   settings.plan(), settings.cma(), settings.sim(plane),
                                   prior=settings.prior(model), iteration_log=log,
                                   workers=settings.threads)
        manifest.add(log.path)
        _save_sequence(out, result, manifest)
        manifest.complete(stage)

        stage = Stage.EVALUATE
        d = contact_threshold if contact_threshold is not None else CONTACT_THRESHOLD_KINEMATIC
        kinematic = clip_from_observations(model, obs, plane)
        report: Dict = {
            "kinematic": contact_artifacts(kinematic, model, plane, d),
            "optimized": contact_artifacts(result.clip, model, plane, d),
        }
        gt_path = settings.resolve(settings.config.ground_truth)
        if gt_path is not None:
            gt = io.load_clip(gt_path)
            report["kinematic_vs_ground_truth"] = evaluate_clips(kinematic, gt, model, plane, obs, d).to_dict()
            evaluation = evaluate_clips(result.clip, gt, model, plane, obs, d)
            report["optimized_vs_ground_truth"] = evaluation.to_dict()
            table = out / "evaluation.txt"
            table.write_text(evaluation.table() + "\n", encoding="utf-8")
            manifest.add(table)
        manifest.add(io.write_document(out / "evaluation.json", report))
        manifest.complete(stage)
    except PhysMotionError as e:
        manifest.failed_stage, manifest.error = stage.value, str(e)
        manifest.save()
        logger.error(f"Pipeline stopped at '{stage.value}': {e}")
        raise
    logger.info(f"Pipeline finished: {len(manifest.artifacts)} artifacts in {out}")
    return manifest
