"""
Flow field export: per-vertex text tables and legacy VTK files.
"""
import logging
from pathlib import Path
from typing import List, Union

from tidalfarm.mesh.geometry import Mesh
from tidalfarm.shallow_water.models import FlowState, Trajectory
from tidalfarm.utils import format_float, write_table

logger = logging.getLogger(__name__)

TABLE_HEADER = 'x y u_x u_y eta'


def write_flow_table(mesh: Mesh, state: FlowState, path: Union[str, Path]) -> Path:
    nv = mesh.num_vertices
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    return write_table(path, TABLE_HEADER, [x, y, state.ux[:nv], state.uy[:nv], state.eta],
                       comments=[f"time={format_float(state.time)}"])


def write_flow_vtk(mesh: Mesh, state: FlowState, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nv, nt = mesh.num_vertices, mesh.num_triangles
    f = format_float
    lines = [
        '# vtk DataFile Version 3.0',
        f'tidalfarm flow t={f(state.time)}',
        'ASCII',
        'DATASET UNSTRUCTURED_GRID',
        f'POINTS {nv} double',
    ]
    lines.extend(f"{f(x)} {f(y)} 0.0" for x, y in mesh.vertices.tolist())
    lines.append(f'CELLS {nt} {4 * nt}')
    lines.extend(f"3 {i} {j} {k}" for i, j, k in mesh.triangles.tolist())
    lines.append(f'CELL_TYPES {nt}')
    lines.extend(['5'] * nt)
    lines.append(f'POINT_DATA {nv}')
    lines.append('VECTORS velocity double')
    lines.extend(f"{f(a)} {f(b)} 0.0" for a, b in zip(state.ux[:nv].tolist(), state.uy[:nv].tolist()))
    lines.append('SCALARS eta double 1')
    lines.append('LOOKUP_TABLE default')
    lines.extend(f(e) for e in state.eta.tolist())
    lines.append('CELL_DATA {}'.format(nt))
    lines.append('SCALARS region int 1')
    lines.append('LOOKUP_TABLE default')
    lines.extend(str(r) for r in mesh.region_id.tolist())
    path.write_text('\n'.join(lines) + '\n')
    return path


def export_fields(mesh: Mesh, state: FlowState, directory: Union[str, Path], name: str) -> List[Path]:
    """Write ``flow_<name>.txt`` and ``flow_<name>.vtk``; returns both paths."""
    directory = Path(directory)
    paths = [write_flow_table(mesh, state, directory / f"flow_{name}.txt"),
             write_flow_vtk(mesh, state, directory / f"flow_{name}.vtk")]
    logger.info(f"Wrote flow fields {paths[0].name}, {paths[1].name}")
    return paths


def export_trajectory(mesh: Mesh, trajectory: Trajectory, directory: Union[str, Path],
                      every: int = 0) -> List[Path]:
    """
    Export the final state (``flow_steady`` or ``flow_final``) and, when
    ``every`` > 0, every ``every``-th time level as ``flow_<level>``.
    """
    if trajectory.is_steady:
        return export_fields(mesh, trajectory.final, directory, 'steady')
    paths = []
    if every > 0:
        for level in range(0, len(trajectory), every):
            paths += export_fields(mesh, trajectory[level], directory, f"{level:05d}")
    paths += export_fields(mesh, trajectory.final, directory, 'final')
    return paths
