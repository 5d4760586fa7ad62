"""Ground truth: meshes, simulated scans and antipodal labels."""

from .antipodal import AntipodalParams, Label, LabelResult, analyze_candidate, label_candidate
from .build import BuildStats, RenderSettings, build_dataset
from .mesh import (TriangleMesh, MeshError, SurfaceSamples, box, bundled_meshes, cylinder,
                   load_mesh, sample_surface, save_obj, sphere)
from .render import EmptyRender, Intrinsics, render_view, stereo_render

__all__ = [
    "AntipodalParams", "BuildStats", "EmptyRender", "Intrinsics", "Label", "LabelResult",
    "MeshError", "RenderSettings", "SurfaceSamples", "TriangleMesh", "analyze_candidate", "box",
    "build_dataset", "bundled_meshes", "cylinder", "label_candidate", "load_mesh", "render_view",
    "sample_surface", "save_obj", "sphere", "stereo_render",
]
