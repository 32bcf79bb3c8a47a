"""Mesh loading, validation, normalization, and adjacency.

Walks through the core data structures: build a few procedural meshes,
validate them, normalize them into the unit ball, and inspect the F x 3
edge-adjacency table that every other stage builds on.
"""

import numpy as np

from meshlearn.core import (build_adjacency, euler_characteristic,
                            normalize_mesh, validate_mesh)
from meshlearn.data import icosphere, torus

for name, mesh in [("icosphere(2)", icosphere(2)), ("torus(8, 4)", torus(8, 4))]:
    report = validate_mesh(mesh)
    print(f"{name}: V={mesh.num_vertices} F={mesh.num_faces} "
          f"chi={euler_characteristic(mesh)} ok={report.ok} "
          f"manifold={report.manifold} borders={report.border_edges}")

# normalization: centroid to the origin, furthest vertex to radius 1;
# idempotent and invariant to similarity transforms
mesh = torus(8, 4)
scaled = mesh.with_geometry(mesh.vertices * 7.5 + np.array([3.0, -1.0, 2.0]))
norm = normalize_mesh(scaled)
print("normalized centroid:", np.round(norm.vertices.mean(axis=0), 12))
print("normalized radius:  ", np.linalg.norm(norm.vertices, axis=1).max())
again = normalize_mesh(norm)
print("idempotent to 1e-12:",
      bool(np.abs(again.vertices - norm.vertices).max() <= 1e-12))

# adjacency: three edge-neighbors per face, slots ordered by shared-edge
# length (longest first); -1 marks a missing neighbor on open meshes
adj = build_adjacency(mesh)
print("face 0 neighbors:", adj.neighbors[0].tolist())
print("face 0 shared edges:", adj.shared_edges[0].tolist())
