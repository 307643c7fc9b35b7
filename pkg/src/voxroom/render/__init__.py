from .layered import layer_count_matching, render_layered_frame
from .meshrender import DirectionalLight, render_mesh_frame, shade_flat
from .raymarch import march_rays, raymarch_ray, render_volume_frame, select_mip_level
from .types import (
    MATERIAL_PRESETS,
    Camera,
    ExclusionPlane,
    Frame,
    MaterialPreset,
    VizParams,
    frame_mean_abs_diff,
    frame_psnr,
)

__all__ = [
    "MATERIAL_PRESETS",
    "Camera",
    "DirectionalLight",
    "ExclusionPlane",
    "Frame",
    "MaterialPreset",
    "VizParams",
    "frame_mean_abs_diff",
    "frame_psnr",
    "layer_count_matching",
    "march_rays",
    "raymarch_ray",
    "render_layered_frame",
    "render_mesh_frame",
    "render_volume_frame",
    "select_mip_level",
    "shade_flat",
]
