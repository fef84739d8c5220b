"""
Fixture Script for the PhysMotion demo
Writes the bundled synthetic scenes (a 1 s squat and a walk cycle) together
with run configurations so `app.py pipeline` can be tried without any data.

Usage:
    python scripts/make_fixture.py [--out fixtures] [--seed 0]
"""
import argparse
import os
import sys
from pathlib import Path

# Add parent directory to path to allow imports
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from enums import Scenario
from motion import io
from motion.schemas import RunConfigSchema
from services.synthetic import NoiseConfig, generate_synthetic

# Fixture scenes: name -> (scenario, landmark noise px, pose noise rad)
FIXTURES = {
    "squat": (Scenario.SQUAT, 2.0, 0.02),
    "walk_cycle": (Scenario.WALK_CYCLE, 2.0, 0.05),
}


def write_fixture(out: Path, scenario: Scenario, landmark_px: float, pose_rad: float, seed: int) -> Path:
    scene = generate_synthetic(scenario, seed=seed, noise=NoiseConfig(landmark_px, pose_rad))
    out.mkdir(parents=True, exist_ok=True)
    io.save_body(out / "body.json", scene.model)
    io.save_observations(out / "observations.json", scene.observations)
    io.save_clip(out / "ground_truth.json", scene.ground_truth)
    io.save_controls(out / "controls.json", scene.controls)
    io.save_plane(out / "plane.json", scene.plane)
    return io.save_run_config(out / "config.json", RunConfigSchema(
        body="body.json", observations="observations.json",
        ground_truth="ground_truth.json", plane_file="plane.json",
    ))


def main():
    parser = argparse.ArgumentParser(description="Write the bundled synthetic fixtures")
    parser.add_argument("--out", default="fixtures", help="fixture root directory")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    for name, (scenario, landmark_px, pose_rad) in FIXTURES.items():
        print(f"Writing '{name}' fixture...")
        config = write_fixture(Path(args.out) / name, scenario, landmark_px, pose_rad, args.seed)
        print(f"  run it with: python app.py --fast --config {config} --out-dir runs/{name} pipeline")
    print("Done.")


if __name__ == "__main__":
    main()
