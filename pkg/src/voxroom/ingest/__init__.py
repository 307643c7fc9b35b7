from ..mesh import Mesh
from .lutcsv import load_lut_csv
from .meshio import load_obj, load_stl, save_obj, save_stl
from .npy import parse_npy, read_npy_array, write_npy, write_npy_array
from .raw import RawDescriptor, load_raw
from .zipstack import LuminanceConversionWarning, load_zip_stack, write_zip_stack

__all__ = [
    "Mesh",
    "RawDescriptor",
    "LuminanceConversionWarning",
    "load_lut_csv",
    "load_obj",
    "load_raw",
    "load_stl",
    "load_zip_stack",
    "parse_npy",
    "read_npy_array",
    "save_obj",
    "save_stl",
    "write_npy",
    "write_npy_array",
    "write_zip_stack",
]
