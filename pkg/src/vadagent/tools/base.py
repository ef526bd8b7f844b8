"""Shared tool types: catalog entries, results, and the tool configuration."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional


@dataclass(frozen=True)
class ToolSpec:
    name: str
    ladder_level: str  # "L1".."L7"
    applicability_clause: str
    allowed_domains: Optional[frozenset[str]] = None  # None = all domains
    consumes_vlm_call: bool = False


@dataclass
class ToolResult:
    observation: str
    attachments: list = field(default_factory=list)
    payload: dict[str, Any] = field(default_factory=dict)
    refused: bool = False

    @classmethod
    def refusal(cls, reason: str) -> "ToolResult":
        return cls(observation=reason, refused=True)


class ToolArgError(Exception):
    """Malformed tool arguments; surfaced as an observation, not a crash."""


@dataclass(frozen=True)
class ToolConfig:
    zoom_resolution: int = 512
    patch_grid_k: int = 3
    rotate_max_degrees: int = 20
    diff_flag_threshold: float = 0.1
    side_by_side_max_refs: int = 3
    fft_bands: int = 8
    expert_subspace_dim: int = 16
    expert_stat: str = "max"  # or "topk_mean"
    expert_top_k: int = 5
    expert_bbox_pad: float = 0.15
