"""
Unit tests for the command-line entry point.
"""
from unittest.mock import patch

import pytest

from app import EXIT_OK, EXIT_PIPELINE_ERROR, EXIT_UNEXPECTED, build_parser, main
from exceptions import StageOrderError
from motion import io


class TestParser:
    """Tests for build_parser."""

    def test_global_flags_before_subcommand(self):
        args = build_parser().parse_args(["--seed", "7", "--fast", "--threads", "3", "pipeline", "--skip-plane"])
        assert (args.seed, args.fast, args.threads) == (7, True, 3)
        assert args.command == "pipeline"
        assert args.skip_plane
        assert args.contact_threshold is None

    def test_subcommand_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["--seed", "1"])

    @pytest.mark.parametrize("command", ["build-body", "estimate-plane", "refine", "optimize",
                                         "simulate", "evaluate", "synth", "pipeline"])
    def test_every_subcommand_registered(self, command):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args([command, "--help"])
        assert exc.value.code == 0


class TestMain:
    """Tests for main and its exit codes."""

    def test_stock_body(self, tmp_path):
        path = tmp_path / "stock.json"
        assert main(["build-body", "--stock", "-o", str(path)]) == EXIT_OK
        assert io.load_body(path).foot_links

    def test_contract_error_exits_2(self, tmp_path):
        assert main(["--out-dir", str(tmp_path), "build-body"]) == EXIT_PIPELINE_ERROR
        assert main(["--out-dir", str(tmp_path), "synth", "cartwheel"]) == EXIT_PIPELINE_ERROR

    def test_pipeline_arguments_forwarded(self, tmp_path):
        with patch("handlers.pipeline.run_pipeline") as run:
            code = main(["--seed", "5", "--out-dir", str(tmp_path), "pipeline",
                         "--skip-plane", "--contact-threshold", "0.01"])
        assert code == EXIT_OK
        settings, out = run.call_args.args
        assert settings.seed == 5
        assert out == tmp_path
        assert run.call_args.kwargs == {"skip_plane": True, "contact_threshold": 0.01}

    def test_stage_order_error_exits_2(self, tmp_path):
        with patch("handlers.pipeline.run_pipeline", side_effect=StageOrderError("no plane")):
            assert main(["--out-dir", str(tmp_path), "pipeline"]) == EXIT_PIPELINE_ERROR

    def test_unexpected_error_exits_1(self, tmp_path):
        with patch("handlers.pipeline.run_pipeline", side_effect=RuntimeError("boom")):
            assert main(["--out-dir", str(tmp_path), "pipeline"]) == EXIT_UNEXPECTED


@pytest.mark.slow
class TestSubcommands:
    """Tests for synth, simulate and evaluate run end to end."""

    def test_synth_simulate_evaluate(self, tmp_path):
        assert main(["--out-dir", str(tmp_path), "synth", "stand", "--duration", "0.2"]) == EXIT_OK
        for name in ("body.json", "observations.json", "ground_truth.json", "controls.json",
                     "plane.json", "scene.json", "config.json"):
            assert (tmp_path / name).is_file()
        assert io.load_run_config(tmp_path / "config.json").plane_file == "plane.json"

        clip_path = tmp_path / "sim.json"
        assert main(["--out-dir", str(tmp_path), "simulate", "--body", str(tmp_path / "body.json"),
                     "--controls", str(tmp_path / "controls.json"), "--duration", "0.1",
                     "--fps", "25", "-o", str(clip_path)]) == EXIT_OK
        assert len(io.load_clip(clip_path)) == 3

        report_path = tmp_path / "report.json"
        assert main(["--out-dir", str(tmp_path), "evaluate", "--body", str(tmp_path / "body.json"),
                     "--prediction", str(tmp_path / "ground_truth.json"),
                     "--ground-truth", str(tmp_path / "ground_truth.json"),
                     "--plane", str(tmp_path / "plane.json"), "-o", str(report_path)]) == EXIT_OK
        assert report_path.is_file()
