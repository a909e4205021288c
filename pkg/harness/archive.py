"""
Run archives.

Layout of one run:

    <out>/<command>/<mode>/run_<index>/
        config.json    config echo plus command, mode, run index and version
        steps.jsonl    one JSON record per simulation step (or per seed)
        summary.json   final per-run results

Floats are written with Python's shortest round-trip repr, so reading an
archive back gives bit-identical numbers. Experiment-level CSV files use
17 significant digits.
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from simulator.errors import ArchiveError

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
STEPS_FILE = "steps.jsonl"
SUMMARY_FILE = "summary.json"


def normalize(record: Any) -> Any:
    """The value a record has after a trip through JSON."""
    return json.loads(json.dumps(record))


@dataclass
class RunArchive:
    """
    Everything recorded about one run.

    Attributes:
        meta: command, mode, run index, code version
        config: scenario config echo (ScenarioConfig.to_dict())
        steps: per-step records
        summary: final results of the run
    """

    meta: Dict[str, Any]
    config: Dict[str, Any]
    steps: List[Dict[str, Any]] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)

    @property
    def command(self) -> str:
        return self.meta["command"]

    @property
    def mode(self) -> str:
        return self.meta["mode"]

    @property
    def run_index(self) -> int:
        return int(self.meta["run_index"])

    def write(self, run_dir) -> Path:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / CONFIG_FILE).write_text(json.dumps({"meta": self.meta, "config": self.config}, indent=2))
        with (run_dir / STEPS_FILE).open("w") as f:
            for record in self.steps:
                f.write(json.dumps(record))
                f.write("\n")
        (run_dir / SUMMARY_FILE).write_text(json.dumps(self.summary, indent=2))
        logger.debug("wrote archive %s (%d records)", run_dir, len(self.steps))
        return run_dir

    @classmethod
    def read(cls, run_dir) -> "RunArchive":
        """
        Raises:
            ArchiveError: if a file is missing or not valid JSON
        """
        run_dir = Path(run_dir)
        try:
            head = json.loads((run_dir / CONFIG_FILE).read_text())
            with (run_dir / STEPS_FILE).open() as f:
                steps = [json.loads(line) for line in f if line.strip()]
            summary = json.loads((run_dir / SUMMARY_FILE).read_text())
        except FileNotFoundError as err:
            raise ArchiveError(f"incomplete archive {run_dir}: {err.filename} missing") from err
        except json.JSONDecodeError as err:
            raise ArchiveError(f"corrupt archive {run_dir}: {err}") from err
        if "meta" not in head or "config" not in head:
            raise ArchiveError(f"{run_dir / CONFIG_FILE} lacks meta or config")
        return cls(meta=head["meta"], config=head["config"], steps=steps, summary=summary)


def run_dir_for(out_dir, command: str, mode: str, run_index: int) -> Path:
    return Path(out_dir) / command / mode / f"run_{run_index:03d}"


def find_runs(root) -> List[Path]:
    """Every run directory at or below `root`, sorted."""
    root = Path(root)
    if (root / CONFIG_FILE).is_file():
        return [root]
    return sorted(p.parent for p in root.rglob(CONFIG_FILE))


def load_runs(root) -> List[RunArchive]:
    runs = find_runs(root)
    if not runs:
        raise ArchiveError(f"no run archives below {root}")
    return [RunArchive.read(p) for p in runs]


# =============================================================================
# Comparison
# =============================================================================

def first_difference(expected: Any, actual: Any, path: str = "") -> Optional[str]:
    """Path of the first field where two JSON values differ, or None if equal."""
    if isinstance(expected, dict) and isinstance(actual, dict):
        for key in sorted(set(expected) | set(actual)):
            if key not in expected or key not in actual:
                return f"{path}.{key}"
            found = first_difference(expected[key], actual[key], f"{path}.{key}")
            if found is not None:
                return found
        return None
    if isinstance(expected, list) and isinstance(actual, list):
        if len(expected) != len(actual):
            return f"{path}[len]"
        for i, (a, b) in enumerate(zip(expected, actual)):
            found = first_difference(a, b, f"{path}[{i}]")
            if found is not None:
                return found
        return None
    if type(expected) is not type(actual) or expected != actual:
        # NaN never equals itself
        if isinstance(expected, float) and isinstance(actual, float) and expected != expected and actual != actual:
            return None
        return path or "."
    return None


def compare_steps(
    expected: Sequence[Dict[str, Any]], actual: Sequence[Dict[str, Any]]
) -> Optional[Tuple[int, str]]:
    """(step index, field path) of the first mismatching record, or None."""
    for step, (a, b) in enumerate(zip(expected, actual)):
        found = first_difference(a, normalize(b))
        if found is not None:
            return step, found
    if len(expected) != len(actual):
        return min(len(expected), len(actual)), "[missing record]"
    return None


# =============================================================================
# CSV
# =============================================================================

def _cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path
