from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator


class RunConfig(BaseModel):
    """Parameters of one command invocation."""

    command: str = Field(..., description="Subcommand name")
    device: Path = Field(..., description="Device file path")
    out_dir: Path = Field(..., description="Output directory")
    seed: int = Field(0, description="Seed for every random draw of the run")
    threads: int = Field(1, ge=1, description="Worker count for sweeps")
    format: Literal["csv", "json"] = Field("csv", description="Tabular output format")
    params: Dict[str, Any] = Field(default_factory=dict, description="Command-specific parameters")

    @field_validator("device", "out_dir", mode="after")
    @classmethod
    def _resolve(cls, value: Path) -> Path:
        return value.expanduser().resolve()


class ResultManifest(BaseModel):
    """Record of one run and the files it produced."""

    command: str = Field(..., description="Subcommand name")
    config_hash: str = Field(..., description="SHA-256 of the canonical config and device file")
    tool_version: str = Field(..., description="Simulator version")
    started: datetime = Field(..., description="Start time")
    wall_clock_s: float = Field(..., description="Elapsed seconds")
    seed: int = Field(..., description="Run seed")
    success: bool = Field(..., description="All outputs written without error")
    files: List[str] = Field(default_factory=list, description="Emitted files, manifest excluded")
    error: Optional[str] = Field(None, description="Error message if the run failed")
