from .mc import IsoResult, marching_cubes, mesh_stats, signed_volume, surface_area

__all__ = ["IsoResult", "marching_cubes", "mesh_stats", "signed_volume", "surface_area"]
