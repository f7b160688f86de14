"""
ASCII mesh documents.

    TFMESH 1
    VERTICES n
    x y                 (n lines)
    TRIANGLES m
    i j k region        (m lines)
    BOUNDARY b
    i j tagname         (b lines)

Indices are zero-based, fields are whitespace separated and ``#`` starts a
comment. Coordinates are written with ``repr`` so that a document read back
reproduces the mesh bit for bit.
"""
import logging
from pathlib import Path
from typing import Iterator, List, Tuple, Union

from tidalfarm.mesh.geometry import Mesh, MeshError

logger = logging.getLogger(__name__)

HEADER = ('TFMESH', '1')


class MeshParseError(MeshError):
    """Raised for a malformed mesh document; ``line`` is 1-based."""
    code = 'mesh.parse'

    def __init__(self, message: str, line: int = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def _records(text: str) -> Iterator[Tuple[int, List[str]]]:
    for number, raw in enumerate(text.splitlines(), start=1):
        fields = raw.split('#', 1)[0].split()
        if fields:
            yield number, fields


def _section(records, name: str) -> int:
    try:
        number, fields = next(records)
    except StopIteration:
        raise MeshParseError(f"missing {name} section")
    if len(fields) != 2 or fields[0] != name:
        raise MeshParseError(f"expected '{name} <count>'", number)
    try:
        count = int(fields[1])
    except ValueError:
        raise MeshParseError(f"invalid {name} count {fields[1]!r}", number)
    if count < 0:
        raise MeshParseError(f"negative {name} count", number)
    return count


def _rows(records, count: int, name: str):
    for _ in range(count):
        try:
            yield next(records)
        except StopIteration:
            raise MeshParseError(f"{name} section ends early")


def import_mesh(text: str) -> Mesh:
    """
    Parse and validate a mesh document.

    Raises:
        MeshParseError: malformed document (with line number).
        MeshValidationError: well-formed document violating a Mesh invariant.
    """
    records = _records(text)
    try:
        number, fields = next(records)
    except StopIteration:
        raise MeshParseError("empty document")
    if tuple(fields) != HEADER:
        raise MeshParseError(f"expected header '{' '.join(HEADER)}'", number)

    nv = _section(records, 'VERTICES')
    vertices = []
    for number, fields in _rows(records, nv, 'VERTICES'):
        if len(fields) != 2:
            raise MeshParseError("vertex line needs 'x y'", number)
        try:
            vertices.append((float(fields[0]), float(fields[1])))
        except ValueError:
            raise MeshParseError(f"invalid coordinate in {' '.join(fields)!r}", number)

    def index(token: str, number: int) -> int:
        try:
            value = int(token)
        except ValueError:
            raise MeshParseError(f"invalid vertex index {token!r}", number)
        if not 0 <= value < nv:
            raise MeshParseError(f"vertex index {value} outside 0..{nv - 1}", number)
        return value

    nt = _section(records, 'TRIANGLES')
    triangles, regions = [], []
    for number, fields in _rows(records, nt, 'TRIANGLES'):
        if len(fields) != 4:
            raise MeshParseError("triangle line needs 'i j k region'", number)
        triangles.append(tuple(index(t, number) for t in fields[:3]))
        try:
            regions.append(int(fields[3]))
        except ValueError:
            raise MeshParseError(f"invalid region label {fields[3]!r}", number)

    nb = _section(records, 'BOUNDARY')
    edges, tags = [], []
    for number, fields in _rows(records, nb, 'BOUNDARY'):
        if len(fields) != 3:
            raise MeshParseError("boundary line needs 'i j tagname'", number)
        edges.append((index(fields[0], number), index(fields[1], number)))
        tags.append(fields[2])

    extra = next(records, None)
    if extra is not None:
        raise MeshParseError("unexpected content after BOUNDARY section", extra[0])

    return Mesh(vertices, triangles, edges, tags, regions).validate()


def export_mesh(mesh: Mesh) -> str:
    lines = [' '.join(HEADER), f"VERTICES {mesh.num_vertices}"]
    lines.extend(f"{x!r} {y!r}" for x, y in mesh.vertices.tolist())
    lines.append(f"TRIANGLES {mesh.num_triangles}")
    lines.extend(f"{i} {j} {k} {r}" for (i, j, k), r in
                 zip(mesh.triangles.tolist(), mesh.region_id.tolist()))
    lines.append(f"BOUNDARY {mesh.boundary_edges.shape[0]}")
    lines.extend(f"{i} {j} {tag}" for (i, j), tag in
                 zip(mesh.boundary_edges.tolist(), mesh.boundary_tags))
    return '\n'.join(lines) + '\n'


def read_mesh(path: Union[str, Path]) -> Mesh:
    path = Path(path)
    logger.info(f"Reading mesh from {path}")
    return import_mesh(path.read_text())


def write_mesh(mesh: Mesh, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(export_mesh(mesh))
    logger.info(f"Wrote mesh to {path}")
    return path
