"""Device-file ingestion, environment defaults and run hashing."""
import hashlib
import json
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from dotenv import load_dotenv
from pydantic import ValidationError

from cli.models import RunConfig
from src.common.errors import ConfigError
from src.device import DeviceSpec

TOOL_VERSION = "0.1.0"

# Load environment variables
load_dotenv()


@lru_cache()
def get_settings() -> Dict[str, Any]:
    """
    Returns the optional environment defaults, read once per process.
    None of them is required.
    """
    return {
        "out_dir": os.getenv("ZZCANCEL_OUT_DIR", "results"),
        "threads": int(os.getenv("ZZCANCEL_THREADS", "1")),
        "log_level": os.getenv("ZZCANCEL_LOG_LEVEL", "WARNING").upper(),
    }


def _locate(text: str, loc: Sequence) -> Optional[int]:
    """Best-effort line number of a pydantic error location inside a JSON document."""
    position, skip = 0, 0
    found = False
    for part in loc:
        if isinstance(part, int):
            skip = part
            continue
        key = f'"{part}"'
        for _ in range(skip + 1):
            index = text.find(key, position)
            if index < 0:
                break
            position = index + len(key)
            found = True
        skip = 0
    return text.count("\n", 0, position) + 1 if found else None


def parse_device(text: str, source: str = "<device>") -> DeviceSpec:
    """
    Validate a device document with strict units.

    Raises:
        ConfigError: On JSON syntax errors (with line) or schema and unit errors (with field path)
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}", line=exc.lineno) from exc
    try:
        return DeviceSpec.model_validate(data, context={"strict_units": True})
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        line = _locate(text, first["loc"])
        where = f"{source}:{line}" if line else source
        raise ConfigError(f"{where}: {field or 'device'}: {first['msg']}", field=field, line=line) from exc


def load_device(path: Path) -> DeviceSpec:
    """Read and validate a device file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"device file {path} does not exist", field="device")
    return parse_device(path.read_text(), str(path))


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical run config plus the raw device file content."""
    canonical = config.model_dump(mode="json")
    canonical["device"] = Path(config.device).name
    canonical.pop("out_dir")
    digest = hashlib.sha256(json.dumps(canonical, sort_keys=True, separators=(",", ":")).encode())
    digest.update(Path(config.device).read_bytes())
    return digest.hexdigest()
