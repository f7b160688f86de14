import tempfile
import unittest
from pathlib import Path

import numpy as np

from tidalfarm.mesh.generate import generate_rectangle
from tidalfarm.mesh.geometry import Mesh, MeshError, MeshValidationError
from tidalfarm.mesh.io import MeshParseError, export_mesh, import_mesh, read_mesh, write_mesh

UNIT_SQUARE = """\
TFMESH 1
VERTICES 4
0 0
1 0
1 1
0 1
TRIANGLES 2
0 1 2 0
0 2 3 0
BOUNDARY 4
0 1 south
1 2 east
2 3 north
3 0 west
"""


class TestGenerateRectangle(unittest.TestCase):

    def test_unit_square(self):
        mesh = generate_rectangle(1.0, 1.0, 1.0)
        self.assertEqual(mesh.num_vertices, 4)
        self.assertEqual(mesh.num_triangles, 2)
        self.assertEqual(mesh.boundary_edges.shape[0], 4)
        self.assertEqual(set(mesh.tag_names), {'south', 'east', 'north', 'west'})
        self.assertAlmostEqual(mesh.total_area(), 1.0)

    def test_refined_box(self):
        box = (1500.0, 1500.0, 2500.0, 2500.0)
        mesh = generate_rectangle(4000.0, 4000.0, 250.0, box, 50.0, regions=[(1, box)], grading=1.5)
        sizes = mesh.cell_sizes()
        c = mesh.centroids
        inside = (c[:, 0] > box[0]) & (c[:, 0] < box[2]) & (c[:, 1] > box[1]) & (c[:, 1] < box[3])
        self.assertTrue(np.all(sizes[inside] <= 50.0 + 1e-9))
        self.assertTrue(np.all(sizes <= 250.0 + 1e-9))
        self.assertTrue(np.all(mesh.region_id[inside] == 1))
        np.testing.assert_array_equal(mesh.region_mask([1]), mesh.region_id == 1)
        self.assertAlmostEqual(mesh.triangle_areas[mesh.region_mask([1])].sum(), 1000.0 * 1000.0, delta=1e-3)
        self.assertAlmostEqual(mesh.total_area(), 4000.0 * 4000.0, delta=1e-3)

    def test_counter_clockwise(self):
        for diagonal in ('mirrored', 'right', 'left'):
            mesh = generate_rectangle(300.0, 200.0, 50.0, diagonal=diagonal)
            self.assertTrue(np.all(mesh.signed_areas() > 0))

    def test_degenerate_rectangle(self):
        with self.assertRaises(MeshError):
            generate_rectangle(0.0, 10.0, 1.0)

    def test_fine_box_outside_domain(self):
        with self.assertRaises(MeshError) as ctx:
            generate_rectangle(100.0, 100.0, 10.0, (50.0, 50.0, 150.0, 90.0), 5.0)
        self.assertIn('exceeds the domain', str(ctx.exception))


class TestMeshValidation(unittest.TestCase):

    def setUp(self):
        self.mesh = generate_rectangle(1.0, 1.0, 1.0)

    def test_clockwise_triangle(self):
        triangles = self.mesh.triangles.copy()
        triangles[0] = triangles[0][::-1]
        mesh = Mesh(self.mesh.vertices, triangles, self.mesh.boundary_edges,
                    self.mesh.boundary_tags, self.mesh.region_id)
        with self.assertRaises(MeshValidationError) as ctx:
            mesh.validate()
        self.assertIn('non-positive area', str(ctx.exception))

    def test_index_out_of_range(self):
        triangles = self.mesh.triangles.copy()
        triangles[1, 2] = 7
        mesh = Mesh(self.mesh.vertices, triangles, self.mesh.boundary_edges,
                    self.mesh.boundary_tags, self.mesh.region_id)
        with self.assertRaises(MeshValidationError):
            mesh.validate()

    def test_untagged_boundary_edge(self):
        mesh = Mesh(self.mesh.vertices, self.mesh.triangles, self.mesh.boundary_edges[:3],
                    self.mesh.boundary_tags[:3], self.mesh.region_id)
        with self.assertRaises(MeshValidationError):
            mesh.validate()

    def test_interpolate_linear_field(self):
        mesh = generate_rectangle(100.0, 50.0, 10.0)
        values = 2.0 * mesh.vertices[:, 0] - 3.0 * mesh.vertices[:, 1] + 1.0
        points = np.array([[12.5, 7.25], [99.0, 49.0], [50.0, 25.0]])
        expected = 2.0 * points[:, 0] - 3.0 * points[:, 1] + 1.0
        np.testing.assert_allclose(mesh.interpolate_p1(values, points), expected, rtol=1e-12, atol=1e-9)
        self.assertEqual(mesh.interpolate_p1(values, [[150.0, 10.0]])[0], 0.0)

    def test_locate_points_outside(self):
        mesh = generate_rectangle(100.0, 50.0, 10.0)
        tri, bary = mesh.locate([[150.0, 10.0], [-5.0, 60.0], [55.0, 25.0]])
        np.testing.assert_array_equal(tri[:2], -1)
        np.testing.assert_array_equal(bary[:2], 0.0)
        self.assertGreaterEqual(tri[2], 0)
        self.assertAlmostEqual(bary[2].sum(), 1.0, places=12)


class TestMeshDocument(unittest.TestCase):

    def test_import_unit_square(self):
        mesh = import_mesh(UNIT_SQUARE)
        self.assertEqual(mesh.num_triangles, 2)
        self.assertEqual(mesh.tag_names, ('south', 'east', 'north', 'west'))

    def test_export_reproduces_mesh(self):
        mesh = generate_rectangle(120.0, 80.0, 20.0, (40.0, 20.0, 80.0, 60.0), 10.0, regions=[(1, (40, 20, 80, 60))])
        again = import_mesh(export_mesh(mesh))
        np.testing.assert_array_equal(again.vertices, mesh.vertices)
        np.testing.assert_array_equal(again.triangles, mesh.triangles)
        np.testing.assert_array_equal(again.region_id, mesh.region_id)
        self.assertEqual(again.boundary_tags, mesh.boundary_tags)

    def test_write_and_read_file(self):
        mesh = generate_rectangle(60.0, 40.0, 20.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_mesh(mesh, Path(tmp) / 'meshes' / 'channel.mesh')
            again = read_mesh(path)
        np.testing.assert_array_equal(again.vertices, mesh.vertices)
        np.testing.assert_array_equal(again.boundary_edges, mesh.boundary_edges)
        self.assertEqual(again.boundary_tags, mesh.boundary_tags)

    def test_parse_error_names_line(self):
        text = UNIT_SQUARE.replace('1 0\n1 1', '1 zero\n1 1', 1)
        with self.assertRaises(MeshParseError) as ctx:
            import_mesh(text)
        self.assertEqual(ctx.exception.line, 4)

    def test_bad_header(self):
        with self.assertRaises(MeshParseError):
            import_mesh(UNIT_SQUARE.replace('TFMESH 1', 'MESH 2'))


if __name__ == '__main__':
    unittest.main()
