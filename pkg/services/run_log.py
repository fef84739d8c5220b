"""
Optimizer run log for the PhysMotion pipeline.
Writes one JSON record per CMA-ES iteration so a long run can be followed
and compared after the fact.
"""
import json
from pathlib import Path
from typing import Dict, List, Optional, Union

from services.cmaes import IterationRecord
from utils.logger import log_with_context, logger

LOG_EVERY = 10


class IterationLog:
    """
    JSON-lines sink for iteration records. With no path the records are only
    kept in memory (and every LOG_EVERY-th one is logged).
    """

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path is not None else None
        self.records: List[Dict] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def write(self, window: int, record: IterationRecord, terms: Optional[Dict[str, float]] = None) -> Dict:
        entry = {
            "window": window,
            "iteration": record.iteration,
            "best": record.best,
            "iteration_best": record.iteration_best,
            "mean": record.mean,
            "sigma": record.sigma,
            "evaluations": record.evaluations,
            "diverged": record.diverged,
            "terms": dict(terms or {}),
        }
        self.records.append(entry)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as f:
                f.write(json.dumps(entry, sort_keys=True, allow_nan=True) + "\n")
        if record.iteration % LOG_EVERY == 0 or record.iteration == 1:
            log_with_context(logger, "DEBUG",
                             f"best={record.best:.6g} sigma={record.sigma:.4g} diverged={record.diverged}",
                             window=window, iteration=record.iteration)
        return entry


def read_iteration_log(path: Union[str, Path]) -> List[Dict]:
    with Path(path).open("r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
