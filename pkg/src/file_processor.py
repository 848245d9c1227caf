import os
import re
import tempfile
from pathlib import Path
from typing import Any, List, Union

import orjson
import pandas as pd
from loguru import logger

from .exceptions import ConfigError

PathLike = Union[str, Path]

PROFILE_COLUMNS = ("y", "rho", "phi")
CSV_FLOAT_FORMAT = "%.17g"


class FileProcessor:
    def __init__(self, base_output_dir: PathLike = "runs"):
        self.base_output_dir = Path(base_output_dir)
        self.base_output_dir.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def safe_name(name: str) -> str:
        """Make a relation or observation name filesystem-safe."""
        return re.sub(r'[<>:"/\\|?*\s]', '_', name)

    def output_path(self, name: str, suffix: str) -> Path:
        return self.base_output_dir / f"{self.safe_name(name)}{suffix}"

    def write_bytes_atomic(self, path: PathLike, data: bytes) -> Path:
        """Write to a temp file next to the target, then rename over it."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp, path)
        except BaseException:
            # never leave the temp file behind
            Path(tmp).unlink(missing_ok=True)
            raise
        logger.info("wrote {}", path)
        return path

    def write_csv(self, frame: pd.DataFrame, name: str) -> Path:
        """CSV with 17 significant digits, so doubles read back exactly."""
        data = frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        return self.write_bytes_atomic(self.output_path(name, ".csv"), data.encode("utf-8"))

    def write_json(self, payload: Any, name: str) -> Path:
        data = orjson.dumps(payload, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY)
        return self.write_bytes_atomic(self.output_path(name, ".json"), data + b"\n")


def read_json_file(path: PathLike) -> Any:
    """Load a JSON document; any read or parse failure becomes a ConfigError naming the path."""
    path = Path(path)
    try:
        return orjson.loads(path.read_bytes())
    except OSError as e:
        raise ConfigError(f"cannot read file ({e.strerror})", str(path)) from e
    except orjson.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON ({e})", str(path)) from e


def read_profile_csv(path: PathLike) -> pd.DataFrame:
    """Read an observed profile with at least the columns y, rho, phi."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigError(f"cannot read profile ({e})", str(path)) from e
    missing = [c for c in PROFILE_COLUMNS if c not in frame.columns]
    if missing:
        raise ConfigError(f"profile is missing columns {missing}", str(path))
    frame = frame.sort_values("y", kind="stable").reset_index(drop=True)
    return frame[list(PROFILE_COLUMNS)].astype(float)


def read_samples_json(path: PathLike) -> List[dict]:
    """Read a JSON list of raw stress samples."""
    data = read_json_file(path)
    if isinstance(data, dict):
        data = data.get("samples")
    if not isinstance(data, list) or not data:
        raise ConfigError("expected a nonempty list of samples", str(path))
    return data
