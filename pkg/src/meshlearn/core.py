"""Triangle mesh representation, I/O, validation and adjacency construction.

Meshes are plain vertex/face arrays. The face adjacency table is the
backbone of every operator in this library: each face stores its three
edge-neighbors, sorted by shared-edge length (longest first, ties broken
by ascending neighbor index). Missing neighbors on borders are stored as
the ``NONE`` sentinel (-1), never as face index 0.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

# Sentinel for "no neighbor across this edge" (border). -1 is never a
# valid face index, unlike the literal zero padding sometimes seen.
NONE = -1

# Zero-area threshold, relative to the squared bounding-box diagonal.
DEGENERACY_EPS = 1e-12


class MeshError(ValueError):
    """Raised for malformed mesh files or invalid mesh operations."""


@dataclass
class Mesh:
    """A triangle mesh: V x 3 vertex coordinates and F x 3 face indices.

    Faces are assumed consistently oriented (counter-clockwise seen from
    outside for closed meshes). ``label``/``name`` are optional metadata
    used by datasets.
    """

    vertices: np.ndarray
    faces: np.ndarray
    label: int | None = None
    name: str | None = None

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must be a V x 3 array")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError("faces must be an F x 3 array")

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    def with_geometry(self, vertices: np.ndarray) -> "Mesh":
        """Same connectivity, new vertex positions."""
        return replace(self, vertices=np.asarray(vertices, dtype=np.float64))


@dataclass
class AdjacencyMatrix:
    """F x 3 edge-neighbor table.

    ``neighbors[f, s]`` is the face sharing edge ``shared_edges[f, s]``
    with face ``f``, or ``NONE`` for a border edge. Slots are sorted by
    shared-edge length, descending; ties broken by ascending neighbor
    index (NONE slots sort last among equal lengths).
    """

    neighbors: np.ndarray      # (F, 3) int64, NONE for borders
    shared_edges: np.ndarray   # (F, 3, 2) int64, each pair sorted ascending

    @property
    def num_faces(self) -> int:
        return self.neighbors.shape[0]


@dataclass
class GeometryCache:
    """Per-face and per-vertex geometric quantities."""

    face_centroids: np.ndarray  # (F, 3)
    face_normals: np.ndarray    # (F, 3) unit
    face_areas: np.ndarray      # (F,)
    vertex_normals: np.ndarray  # (V, 3) unit


@dataclass
class ValidationReport:
    manifold: bool
    oriented: bool
    border_edges: int
    degenerate_faces: list[int] = field(default_factory=list)
    invalid_faces: list[int] = field(default_factory=list)
    nonmanifold_edges: list[tuple[int, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (self.manifold and self.oriented
                and not self.degenerate_faces and not self.invalid_faces)


# ---------------------------------------------------------------------------
# file I/O


def _tokenize(source) -> list[tuple[int, str]]:
    if isinstance(source, bytes):
        text = source.decode("utf-8", errors="replace")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8", errors="replace") if isinstance(data, bytes) else data
    return [(i + 1, line) for i, line in enumerate(text.splitlines())]


def load_off(source) -> Mesh:
    """Parse an ASCII OFF file with triangle faces only."""
    lines = [(n, ln.split("#", 1)[0].strip()) for n, ln in _tokenize(source)]
    lines = [(n, ln) for n, ln in lines if ln]
    if not lines:
        raise MeshError("empty OFF file")
    n0, header = lines[0]
    rest = lines[1:]
    if header != "OFF":
        # counts may share the header line ("OFF 8 12 0")
        if header.startswith("OFF"):
            rest = [(n0, header[3:].strip())] + rest
        else:
            raise MeshError(f"line {n0}: missing OFF header")
    if not rest:
        raise MeshError("missing OFF counts line")
    n1, counts = rest[0]
    parts = counts.split()
    if len(parts) < 2:
        raise MeshError(f"line {n1}: malformed counts line {counts!r}")
    try:
        nv, nf = int(parts[0]), int(parts[1])
    except ValueError:
        raise MeshError(f"line {n1}: malformed counts line {counts!r}") from None
    body = rest[1:]
    if len(body) < nv + nf:
        raise MeshError(f"OFF file truncated: expected {nv} vertices and {nf} faces")
    verts = np.empty((nv, 3))
    for i in range(nv):
        n, ln = body[i]
        p = ln.split()
        if len(p) < 3:
            raise MeshError(f"line {n}: malformed vertex line")
        try:
            verts[i] = [float(p[0]), float(p[1]), float(p[2])]
        except ValueError:
            raise MeshError(f"line {n}: malformed vertex line") from None
    faces = np.empty((nf, 3), dtype=np.int64)
    for i in range(nf):
        n, ln = body[nv + i]
        p = ln.split()
        try:
            k = int(p[0])
        except (ValueError, IndexError):
            raise MeshError(f"line {n}: malformed face line") from None
        if k != 3:
            raise MeshError(f"non-triangle face at line {n}")
        if len(p) < 4:
            raise MeshError(f"line {n}: malformed face line")
        faces[i] = [int(p[1]), int(p[2]), int(p[3])]
    if nf and faces.size and (faces.min() < 0 or faces.max() >= nv):
        bad = int(np.argmax((faces < 0).any(axis=1) | (faces >= nv).any(axis=1)))
        raise MeshError(f"face {bad}: vertex index out of range")
    return Mesh(verts, faces)


def load_obj(source) -> Mesh:
    """Parse a Wavefront OBJ with triangular faces.

    Texture/normal sub-indices (``f 1/2/3``) are ignored; 1-based indices
    are converted to 0-based (negative indices are relative to the end).
    """
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    for n, raw in _tokenize(source):
        ln = raw.split("#", 1)[0].strip()
        if not ln:
            continue
        p = ln.split()
        if p[0] == "v":
            if len(p) < 4:
                raise MeshError(f"line {n}: malformed vertex line")
            try:
                verts.append([float(p[1]), float(p[2]), float(p[3])])
            except ValueError:
                raise MeshError(f"line {n}: malformed vertex line") from None
        elif p[0] == "f":
            if len(p) != 4:
                raise MeshError(f"non-triangle face at line {n}")
            idx = []
            for tok in p[1:]:
                head = tok.split("/")[0]
                try:
                    i = int(head)
                except ValueError:
                    raise MeshError(f"line {n}: malformed face index {tok!r}") from None
                idx.append(i - 1 if i > 0 else len(verts) + i)
            if any(i < 0 or i >= len(verts) for i in idx):
                raise MeshError(f"line {n}: vertex index out of range")
            faces.append(idx)
    return Mesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                np.array(faces, dtype=np.int64).reshape(-1, 3))


def load_mesh(source, fmt: str | None = None) -> Mesh:
    """Load a mesh from a path, byte stream or string; OFF or OBJ."""
    name = None
    if isinstance(source, (str,)) and "\n" not in source:
        name = source
        with open(source, "rb") as fh:
            data = fh.read()
    elif hasattr(source, "read"):
        name = getattr(source, "name", None)
        data = source.read()
    else:
        data = source
    if fmt is None:
        if name is not None and name.lower().endswith(".obj"):
            fmt = "OBJ"
        elif name is not None and name.lower().endswith(".off"):
            fmt = "OFF"
        else:
            head = data[:16] if isinstance(data, (bytes, str)) else b""
            if isinstance(head, bytes):
                head = head.decode("utf-8", errors="replace")
            fmt = "OFF" if head.lstrip().startswith("OFF") else "OBJ"
    fmt = fmt.upper()
    if fmt == "OFF":
        mesh = load_off(data)
    elif fmt == "OBJ":
        mesh = load_obj(data)
    else:
        raise MeshError(f"unsupported format {fmt!r}")
    if name is not None:
        mesh.name = name
    return mesh


def save_off(mesh: Mesh, target) -> None:
    """Write ``mesh`` as ASCII OFF to a path or text stream."""
    buf = io.StringIO()
    buf.write("OFF\n%d %d 0\n" % (mesh.num_vertices, mesh.num_faces))
    for v in mesh.vertices:
        buf.write("%.17g %.17g %.17g\n" % (v[0], v[1], v[2]))
    for f in mesh.faces:
        buf.write("3 %d %d %d\n" % (f[0], f[1], f[2]))
    if isinstance(target, str):
        with open(target, "w") as fh:
            fh.write(buf.getvalue())
    else:
        target.write(buf.getvalue())


# ---------------------------------------------------------------------------
# validation and normalization


def _directed_edges(faces: np.ndarray) -> np.ndarray:
    """(3F, 2) directed edges in face order: (v0,v1), (v1,v2), (v2,v0)."""
    return np.stack([faces, np.roll(faces, -1, axis=1)], axis=2).reshape(-1, 2)


def face_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a = vertices[faces[:, 1]] - vertices[faces[:, 0]]
    b = vertices[faces[:, 2]] - vertices[faces[:, 0]]
    return 0.5 * np.linalg.norm(np.cross(a, b), axis=1)


def degeneracy_threshold(mesh: Mesh) -> float:
    if mesh.num_vertices == 0:
        return 0.0
    diag2 = float(np.sum((mesh.vertices.max(0) - mesh.vertices.min(0)) ** 2))
    return DEGENERACY_EPS * diag2


def validate_mesh(mesh: Mesh) -> ValidationReport:
    """Check manifoldness, orientation, borders and degenerate faces.

    Report-based: nothing raises, every violated invariant is listed.
    """
    V, F = mesh.num_vertices, mesh.num_faces
    invalid = []
    for i, f in enumerate(mesh.faces):
        if (f < 0).any() or (f >= V).any() or len(set(f.tolist())) != 3:
            invalid.append(i)
    ok_faces = np.ones(F, dtype=bool)
    ok_faces[invalid] = False
    faces = mesh.faces[ok_faces]

    directed = _directed_edges(faces)
    und = np.sort(directed, axis=1)
    manifold = True
    oriented = True
    nonmanifold: list[tuple[int, int]] = []
    borders = 0
    if len(und):
        uniq, counts = np.unique(und, axis=0, return_counts=True)
        over = counts > 2
        if over.any():
            manifold = False
            nonmanifold = [tuple(e) for e in uniq[over].tolist()]
        borders = int((counts == 1).sum())
        # consistent orientation: no directed edge may repeat
        _, dcounts = np.unique(directed, axis=0, return_counts=True)
        if (dcounts > 1).any():
            oriented = False

    eps = degeneracy_threshold(mesh)
    areas = face_areas(mesh.vertices, mesh.faces) if F else np.zeros(0)
    degenerate = [i for i in range(F) if ok_faces[i] and areas[i] <= eps]
    return ValidationReport(manifold=manifold, oriented=oriented,
                            border_edges=borders, degenerate_faces=degenerate,
                            invalid_faces=invalid, nonmanifold_edges=nonmanifold)


def normalize_mesh(mesh: Mesh) -> Mesh:
    """Center the vertex centroid at the origin and scale into the unit sphere.

    The farthest vertex from the origin ends up at distance exactly 1.
    Idempotent and invariant to similarity transforms of the input.
    """
    if mesh.num_vertices < 1:
        raise MeshError("cannot normalize an empty mesh")
    centered = mesh.vertices - mesh.vertices.mean(axis=0)
    radius = float(np.linalg.norm(centered, axis=1).max())
    if radius == 0.0:
        raise MeshError("all vertices coincident; zero scale")
    return mesh.with_geometry(centered / radius)


# ---------------------------------------------------------------------------
# adjacency


def edge_length_sq(vertices: np.ndarray, edge) -> float:
    d = vertices[edge[0]] - vertices[edge[1]]
    return float(d @ d)


def sort_adjacency_slots(vertices: np.ndarray, neighbors, edges, num_faces: int):
    """Canonical slot order: shared-edge length descending, ties by
    ascending neighbor index with NONE last. Shared across the full
    build and the incremental pooling update so both stay bit-identical."""
    keyed = sorted(
        range(len(neighbors)),
        key=lambda s: (-edge_length_sq(vertices, edges[s]),
                       neighbors[s] if neighbors[s] != NONE else num_faces),
    )
    return [neighbors[s] for s in keyed], [edges[s] for s in keyed]


def build_adjacency(mesh: Mesh) -> AdjacencyMatrix:
    """Build the F x 3 edge-neighbor table.

    Raises on non-manifold edges (3+ incident faces).
    """
    F = mesh.num_faces
    edge_faces: dict[tuple[int, int], list[int]] = {}
    for f in range(F):
        a, b, c = mesh.faces[f]
        for u, v in ((a, b), (b, c), (c, a)):
            key = (int(u), int(v)) if u < v else (int(v), int(u))
            edge_faces.setdefault(key, []).append(f)
    for key, fs in edge_faces.items():
        if len(fs) > 2:
            raise MeshError(f"non-manifold edge {key}: {len(fs)} incident faces")
    neighbors = np.full((F, 3), NONE, dtype=np.int64)
    shared = np.full((F, 3, 2), NONE, dtype=np.int64)
    for f in range(F):
        a, b, c = mesh.faces[f]
        slot_nb, slot_edge = [], []
        for u, v in ((a, b), (b, c), (c, a)):
            key = (int(u), int(v)) if u < v else (int(v), int(u))
            fs = edge_faces[key]
            other = [g for g in fs if g != f]
            slot_nb.append(other[0] if other else NONE)
            slot_edge.append(key)
        slot_nb, slot_edge = sort_adjacency_slots(mesh.vertices, slot_nb, slot_edge, F)
        neighbors[f] = slot_nb
        shared[f] = slot_edge
    return AdjacencyMatrix(neighbors, shared)


# ---------------------------------------------------------------------------
# geometry


def compute_geometry(mesh: Mesh) -> GeometryCache:
    """Face centroids/normals/areas and averaged vertex normals.

    Vertex normal = normalized unweighted mean of incident face normals;
    a zero-norm mean falls back to the first incident face normal.
    Raises on zero-area faces.
    """
    v, f = mesh.vertices, mesh.faces
    centroids = v[f].mean(axis=1)
    a = v[f[:, 1]] - v[f[:, 0]]
    b = v[f[:, 2]] - v[f[:, 0]]
    cross = np.cross(a, b)
    norms = np.linalg.norm(cross, axis=1)
    areas = 0.5 * norms
    eps = degeneracy_threshold(mesh)
    bad = np.nonzero(areas <= eps)[0]
    if len(bad):
        raise MeshError(f"zero-area face {int(bad[0])}")
    normals = cross / norms[:, None]

    vsum = np.zeros((mesh.num_vertices, 3))
    vcount = np.zeros(mesh.num_vertices)
    for k in range(3):
        np.add.at(vsum, f[:, k], normals)
        np.add.at(vcount, f[:, k], 1.0)
    used = vcount > 0
    vnormals = np.zeros_like(vsum)
    vnormals[used] = vsum[used] / vcount[used, None]
    vn = np.linalg.norm(vnormals, axis=1)
    zero = used & (vn <= 1e-300)
    if zero.any():
        first = np.full(mesh.num_vertices, -1, dtype=np.int64)
        for fi in range(mesh.num_faces - 1, -1, -1):
            for k in range(3):
                first[f[fi, k]] = fi
        vnormals[zero] = normals[first[zero]]
        vn = np.linalg.norm(vnormals, axis=1)
    nz = vn > 0
    vnormals[nz] = vnormals[nz] / vn[nz, None]
    return GeometryCache(centroids, normals, areas, vnormals)


def euler_characteristic(mesh: Mesh) -> int:
    """V - E + F with E counted over unique undirected edges."""
    und = np.sort(_directed_edges(mesh.faces), axis=1)
    E = len(np.unique(und, axis=0)) if len(und) else 0
    return mesh.num_vertices - E + mesh.num_faces
