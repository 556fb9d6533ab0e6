from .constants import (
    ALPHA_CLAMP, ALPHA_SKIP, T_TERMINATE, POWER_CUTOFF, LOW_PASS, Z_NEAR, TILE_SIZE,
)
from .projection import ProjectedGaussian, project, project_batch, project_backward
from .forward import RenderOutput, rasterize_forward, render
from .backward import rasterize_backward, render_backward
from .reference import reference_render

__all__ = [
    "ProjectedGaussian", "project", "project_batch", "project_backward",
    "RenderOutput", "rasterize_forward", "rasterize_backward", "render",
    "render_backward", "reference_render",
    "ALPHA_CLAMP", "ALPHA_SKIP", "T_TERMINATE", "POWER_CUTOFF", "LOW_PASS",
    "Z_NEAR", "TILE_SIZE",
]
