import json
import uuid
from datetime import datetime
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from nlslab import __version__
from nlslab.errors import IOFailure

TRACKED_PACKAGES = ["numpy", "scipy", "pydantic"]


def package_versions() -> Dict[str, str]:
    versions = {"nlslab": __version__}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


class RunManifest(BaseModel):
    """Provenance of one subcommand run, stored next to its CSV"""

    command: str
    config: dict
    seed: int
    versions: Dict[str, str] = Field(default_factory=package_versions)
    started: str = Field(default_factory=lambda: datetime.now().isoformat(timespec="seconds"))
    wall_time: Optional[float] = None
    exit_status: Optional[int] = None
    outputs: List[str] = Field(default_factory=list)
    summary: Dict[str, str] = Field(default_factory=dict)
    log_path: Optional[str] = None

    def save(self, filepath: Path) -> None:
        try:
            with open(filepath, "w") as f:
                json.dump(self.model_dump(), f, indent=2)
        except OSError as e:
            raise IOFailure(f"Could not write manifest {filepath}: {e}") from e

    @classmethod
    def load(cls, filepath: Path) -> "RunManifest":
        with open(filepath) as f:
            return cls.model_validate(json.load(f))


def write_run_log(manifest: RunManifest, log_dir: Path, error: Optional[str] = None) -> Path:
    """Write a log file with the run's metadata, config and summary.

    Args:
        manifest: The finished run's manifest
        log_dir: Directory to write the log into (created if missing)
        error: Error message if the run failed

    Returns:
        Path: The path to the written log file
    """
    log_dir.mkdir(parents=True, exist_ok=True)
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    random_key = str(uuid.uuid4())[:8]
    log_file = log_dir / f"run_{timestamp}_{random_key}.log"

    try:
        with open(log_file, "w", encoding="utf-8") as f:
            f.write(f"Timestamp: {timestamp}\n")
            f.write(f"Command: {manifest.command}\n")
            f.write(f"Seed: {manifest.seed}\n")
            f.write(f"Duration: {manifest.wall_time or 0.0:.3f} seconds\n")
            f.write(f"Exit status: {manifest.exit_status}\n")
            f.write(f"Versions: {', '.join(f'{k}={v}' for k, v in manifest.versions.items())}\n")
            f.write("-" * 80 + "\n\n")

            f.write("=== Config ===\n")
            f.write(json.dumps(manifest.config, indent=2) + "\n")
            f.write("\n" + "-" * 80 + "\n")

            f.write("\n=== Summary ===\n")
            for key, value in manifest.summary.items():
                f.write(f"{key}: {value}\n")
            for output in manifest.outputs:
                f.write(f"output: {output}\n")
            if error:
                f.write(f"\n[ERROR]\n{error}\n")
            f.write("\n" + "-" * 80)
    except OSError as e:
        raise IOFailure(f"Could not write run log in {log_dir}: {e}") from e

    return log_file
