"""Meshes: uniform and graded disks, local refinement and exact ball areas.

    python demos/01_meshes.py
"""
import numpy as np

from lpteich.mesh import ball_areas, build_disk_mesh, build_rectangle_mesh, check_invariants, mesh_statistics, refine

# A uniform disk. The origin is always a vertex; boundary vertices sit on the unit circle.
disk = build_disk_mesh(0.1)
print("uniform disk:", {k: round(v, 4) for k, v in mesh_statistics(disk).items()})

# Grading concentrates vertices around the pin: edge length ~ h * dist^gamma.
graded = build_disk_mesh(0.05, grading_exponent=0.5, pin_location=-0.3)
print("graded disk, local size at the pin:", round(graded.local_size(-0.3), 5),
      "at the origin:", round(graded.local_size(0), 5))

# A real pin yields a mesh that is exactly symmetric under conjugation.
z = graded.vertices
print("conjugation symmetric vertex set:", np.isin(np.round(np.conj(z), 12), np.round(z, 12)).all())

# Red-green refinement of B(-0.3, 0.2), three times, as used by the refinement studies.
m = disk
for level in range(3):
    m = refine(m, -0.3, 0.2)
    check_invariants(m)
    print(f"level {level + 1}: {m.n_triangles} triangles, local size {m.local_size(-0.3):.4f}")

# Integrals over B(c, r) use the exact area of every triangle inside the ball, so the
# region does not change with the mesh.
for mesh in (disk, m):
    print("area of B(-0.3, 0.1):", ball_areas(mesh, -0.3, 0.1).sum(), "vs", np.pi * 0.01)

rect = build_rectangle_mesh(1.0, 1.0, 0.1)
print("unit square:", rect.n_triangles, "triangles,", rect.boundary.sum(), "boundary vertices")
