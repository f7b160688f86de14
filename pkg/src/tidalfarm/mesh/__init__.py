from tidalfarm.mesh.geometry import Mesh, MeshError, MeshValidationError
from tidalfarm.mesh.generate import generate_rectangle
from tidalfarm.mesh.io import MeshParseError, export_mesh, import_mesh, read_mesh, write_mesh

__all__ = [
    'Mesh',
    'MeshError',
    'MeshParseError',
    'MeshValidationError',
    'export_mesh',
    'generate_rectangle',
    'import_mesh',
    'read_mesh',
    'write_mesh',
]
