"""Face-collapse pooling.

A pooling pass scores every face by the squared feature distance to its
edge-neighbors, greedily selects a conflict-free set of low-score faces,
and collapses each selected face: its three vertices merge into one
point at the face centroid, which removes the face and its three
edge-neighbors (2 vertices, 6 edges, 4 faces per collapse, preserving
the Euler characteristic). Faces around the collapse ("ring") survive
with vertices moved to the merge points and receive the average of the
features they absorb.

Conflicts between candidate collapses are decided by simulating the
combined result of all selections so far: a candidate is accepted only
if, after applying every accepted collapse simultaneously, each affected
edge still has exactly two incident faces (or vanishes entirely with
them), orientation stays consistent, no face degenerates or duplicates,
and no vertex is left without a face. Removed sets are pairwise
disjoint and no vertex is merged by two regions, so all collapses of a
pass commute and can be applied simultaneously in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (NONE, AdjacencyMatrix, Mesh, MeshError,
                   sort_adjacency_slots)


@dataclass
class PoolRegion:
    """One planned collapse: the center face, the faces that disappear,
    and the ring whose connectivity changes."""

    center: int
    removed: list[int]        # sorted; {center} + its 3 edge-neighbors
    ring: list[int]           # sorted; vertex-sharing faces outside removed
    old_vertices: list[int]   # the 3 vertex ids of the center face
    merged_vertex: np.ndarray  # collapse point (center face centroid)


@dataclass
class PoolPlan:
    """A full pooling pass: compatible regions plus the dense remaps and
    feature-averaging provenance they induce."""

    regions: list[PoolRegion]
    face_remap: np.ndarray     # (F,) old -> new face id, REMOVED = -1
    vertex_remap: np.ndarray   # (V,) old -> new vertex id
    merged_ids: np.ndarray     # (R,) new vertex id per region
    provenance: list[list[int]]  # per new face, sorted old contributor ids
    num_new_faces: int
    num_new_vertices: int

    @property
    def num_removed(self) -> int:
        return sum(len(r.removed) for r in self.regions)


@dataclass
class PassRecord:
    """What the backward pass needs from one applied pooling pass."""

    provenance: list[list[int]]
    old_num_faces: int


@dataclass
class PooledMesh:
    mesh: Mesh
    adjacency: AdjacencyMatrix
    features: np.ndarray
    passes: list[PassRecord] = field(default_factory=list)
    pass_count: int = 0
    stalled: bool = False


def compute_face_weights(features: np.ndarray, adj: AdjacencyMatrix) -> np.ndarray:
    """Per-face saliency: sum of squared feature distances to the (up to
    three) edge-neighbors; missing neighbors contribute 0."""
    if features.shape[0] != adj.num_faces:
        raise ValueError("features row count does not match adjacency")
    nb = adj.neighbors
    safe = np.where(nb == NONE, 0, nb)
    diff = features[:, None, :] - features[safe]
    # sequential accumulation in channel order, then slot order: a fixed,
    # documented reduction order that a scalar reference loop reproduces
    # bit-exactly
    sq = np.zeros(nb.shape)
    for c in range(features.shape[1]):
        d = diff[:, :, c]
        sq += d * d
    sq[nb == NONE] = 0.0
    return (sq[:, 0] + sq[:, 1]) + sq[:, 2]


def _face_components(adj: AdjacencyMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Connected component label and size per face (edge-adjacency)."""
    F = adj.num_faces
    comp = np.full(F, -1, dtype=np.int64)
    sizes = []
    for seed in range(F):
        if comp[seed] >= 0:
            continue
        cid = len(sizes)
        stack = [seed]
        comp[seed] = cid
        n = 0
        while stack:
            f = stack.pop()
            n += 1
            for g in adj.neighbors[f]:
                if g != NONE and comp[g] < 0:
                    comp[g] = cid
                    stack.append(int(g))
        sizes.append(n)
    return comp, np.array(sizes, dtype=np.int64)


def _vertex_to_faces(mesh: Mesh) -> list[list[int]]:
    v2f: list[list[int]] = [[] for _ in range(mesh.num_vertices)]
    for f in range(mesh.num_faces):
        for v in mesh.faces[f]:
            v2f[int(v)].append(f)
    return v2f


class _PassState:
    """Incrementally maintained simulation of one pooling pass.

    Tracks, for the hypothetical mesh obtained by applying every accepted
    collapse simultaneously: which input faces are still present, their
    current (partially merged) vertex triples, undirected and directed
    edge incidence counts, face-triple multiplicities and per-vertex face
    counts. A candidate collapse is accepted only if committing it keeps
    every one of those observations manifold-consistent.
    """

    def __init__(self, mesh: Mesh, adj: AdjacencyMatrix):
        F = mesh.num_faces
        self.mesh = mesh
        self.adj = adj
        self.v2f = _vertex_to_faces(mesh)
        self.comp, comp_sizes = _face_components(adj)
        self.comp_left = comp_sizes.copy()
        self.alive = np.ones(F, dtype=bool)
        self.post = [tuple(int(v) for v in mesh.faces[f]) for f in range(F)]
        self.ecount: dict[tuple[int, int], int] = {}
        self.dcount: dict[tuple[int, int], int] = {}
        self.fkey: dict[tuple[int, ...], int] = {}
        self.vcount: dict[int, int] = {}
        self.merged_of: dict[int, int] = {}   # old vertex -> merge token
        self.next_token = mesh.num_vertices
        for f in range(F):
            tri = self.post[f]
            for a, b in _tri_edges(tri):
                self.dcount[(a, b)] = self.dcount.get((a, b), 0) + 1
                e = (a, b) if a < b else (b, a)
                self.ecount[e] = self.ecount.get(e, 0) + 1
            self.fkey[tuple(sorted(tri))] = self.fkey.get(tuple(sorted(tri)), 0) + 1
            for v in tri:
                self.vcount[v] = self.vcount.get(v, 0) + 1

    def try_candidate(self, f: int):
        """Return (removed, ring, center_verts) if collapsing f is
        compatible with everything accepted so far, else None."""
        mesh, adj = self.mesh, self.adj
        row = adj.neighbors[f]
        if (row == NONE).any():
            return None
        nbs = {int(g) for g in row}
        if len(nbs) != 3:
            return None
        removed = sorted(nbs | {f})
        if not all(self.alive[h] for h in removed):
            return None
        if self.comp_left[self.comp[f]] - 4 < 4:
            return None
        cvs = {int(v) for v in mesh.faces[f]}
        if any(v in self.merged_of for v in cvs):
            return None  # center vertex already claimed by another merge
        ring = sorted({h for v in cvs for h in self.v2f[v]
                       if self.alive[h] and h not in removed})
        token = self.next_token

        de: dict[tuple[int, int], int] = {}
        dd: dict[tuple[int, int], int] = {}
        dfk: dict[tuple[int, ...], int] = {}

        def acc(tri, sgn):
            for a, b in _tri_edges(tri):
                dd[(a, b)] = dd.get((a, b), 0) + sgn
                e = (a, b) if a < b else (b, a)
                de[e] = de.get(e, 0) + sgn
            k = tuple(sorted(tri))
            dfk[k] = dfk.get(k, 0) + sgn

        for h in removed:
            acc(self.post[h], -1)
        new_tris = {}
        for h in ring:
            old = self.post[h]
            acc(old, -1)
            nt = tuple(token if v in cvs else v for v in old)
            if len(set(nt)) < 3:
                return None  # face would degenerate under the merge
            new_tris[h] = nt
            acc(nt, 1)
        for e, s in de.items():
            if s and self.ecount.get(e, 0) + s not in (0, 2):
                return None  # edge would not stay 2-manifold
        for d, s in dd.items():
            if s and self.dcount.get(d, 0) + s > 1:
                return None  # orientation would break
        for k, s in dfk.items():
            if s > 0 and self.fkey.get(k, 0) + s > 1:
                return None  # duplicate face after the merge
        # no surviving vertex may lose its last face
        lost: dict[int, int] = {}
        for h in removed:
            for v in self.post[h]:
                if v not in cvs:
                    lost[v] = lost.get(v, 0) + 1
        for v, n in lost.items():
            if self.vcount[v] - n <= 0:
                return None
        return removed, ring, new_tris, sorted(cvs)

    def commit(self, f: int, removed, ring, new_tris, cvs) -> None:
        token = self.next_token
        for h in removed:
            tri = self.post[h]
            self._account(tri, -1)
            self.alive[h] = False
        for h in ring:
            self._account(self.post[h], -1)
            self.post[h] = new_tris[h]
            self._account(new_tris[h], 1)
        for v in cvs:
            self.merged_of[v] = token
        self.next_token += 1
        self.comp_left[self.comp[f]] -= 4

    def _account(self, tri, sgn):
        for a, b in _tri_edges(tri):
            self.dcount[(a, b)] = self.dcount.get((a, b), 0) + sgn
            e = (a, b) if a < b else (b, a)
            self.ecount[e] = self.ecount.get(e, 0) + sgn
        k = tuple(sorted(tri))
        self.fkey[k] = self.fkey.get(k, 0) + sgn
        for v in tri:
            self.vcount[v] = self.vcount.get(v, 0) + sgn


def _tri_edges(tri):
    a, b, c = tri
    return (a, b), (b, c), (c, a)


def plan_pass(mesh: Mesh, adj: AdjacencyMatrix, weights: np.ndarray,
              target: int) -> PoolPlan:
    """Greedy conflict-free selection of collapse regions.

    Repeatedly picks the lowest-weight remaining face (ties by ascending
    face id) whose collapse passes the manifold guard and is compatible
    with every collapse accepted so far, until the projected face count
    reaches ``target`` or no selectable face remains. Compatibility is
    judged by the shared pass simulation (see _PassState), so accepted
    collapses always compose into a valid simultaneous application.
    """
    if target < 4:
        raise ValueError("target face count must be >= 4")
    F, V = mesh.num_faces, mesh.num_vertices
    regions: list[PoolRegion] = []
    projected = F
    if projected <= target:
        return _finalize_plan(mesh, regions, None, F, V)
    state = _PassState(mesh, adj)
    order = [int(f) for f in np.lexsort((np.arange(F), weights))]
    # rejection cache: a face stays rejected until a nearby commit could
    # change the simulation outcome for it
    rejected = np.zeros(F, dtype=bool)
    dirty = np.zeros(F, dtype=bool)
    while projected > target:
        accepted = False
        for f in order:
            if not state.alive[f]:
                continue
            if rejected[f] and not dirty[f]:
                continue
            cand = state.try_candidate(f)
            if cand is None:
                rejected[f] = True
                dirty[f] = False
                continue
            removed, ring, new_tris, cvs = cand
            regions.append(PoolRegion(
                center=f, removed=removed, ring=ring, old_vertices=cvs,
                merged_vertex=mesh.vertices[mesh.faces[f]].mean(axis=0)))
            state.commit(f, removed, ring, new_tris, cvs)
            _mark_dirty(mesh, state.v2f, removed + ring, dirty)
            projected -= len(removed)
            accepted = True
            break  # restart the scan: repeated argmin over survivors
        if not accepted:
            break
    return _finalize_plan(mesh, regions, state, F, V)


def _mark_dirty(mesh: Mesh, v2f, touched, dirty) -> None:
    """Invalidate cached rejections within two vertex hops of the faces
    touched by a commit; only their neighborhoods can change outcome."""
    near = set()
    for y in touched:
        for v in mesh.faces[y]:
            near.update(v2f[int(v)])
    for z in near:
        for v in mesh.faces[z]:
            for w in v2f[int(v)]:
                dirty[w] = True


def _finalize_plan(mesh: Mesh, regions: list[PoolRegion],
                   state: _PassState | None, F: int, V: int) -> PoolPlan:
    removed_faces = np.zeros(F, dtype=bool)
    for r in regions:
        removed_faces[r.removed] = True
    # rings are trimmed to faces that actually survive the whole pass
    for r in regions:
        r.ring = [g for g in r.ring if not removed_faces[g]]
    ring_of: dict[int, list[int]] = {}
    for ri, r in enumerate(regions):
        for g in r.ring:
            ring_of.setdefault(g, []).append(ri)
    face_remap = np.full(F, -1, dtype=np.int64)
    face_remap[~removed_faces] = np.arange(int((~removed_faces).sum()))

    removed_verts = np.zeros(V, dtype=bool)
    for r in regions:
        removed_verts[r.old_vertices] = True
    vertex_remap = np.full(V, -1, dtype=np.int64)
    n_survive = int((~removed_verts).sum())
    vertex_remap[~removed_verts] = np.arange(n_survive)
    merged_ids = np.arange(n_survive, n_survive + len(regions), dtype=np.int64)
    for mid, r in zip(merged_ids, regions):
        vertex_remap[r.old_vertices] = mid

    provenance: list[list[int]] = []
    for g in range(F):
        if removed_faces[g]:
            continue
        if g in ring_of:
            gvs = set(int(v) for v in mesh.faces[g])
            contrib = set()
            for ri in ring_of[g]:
                for h in regions[ri].removed:
                    if gvs & set(int(v) for v in mesh.faces[h]):
                        contrib.add(h)
            provenance.append(sorted(contrib | {g}))
        else:
            provenance.append([g])
    return PoolPlan(regions=regions, face_remap=face_remap,
                    vertex_remap=vertex_remap, merged_ids=merged_ids,
                    provenance=provenance,
                    num_new_faces=F - int(removed_faces.sum()),
                    num_new_vertices=n_survive + len(regions))


def apply_pass(mesh: Mesh, adj: AdjacencyMatrix, features: np.ndarray,
               plan: PoolPlan) -> PooledMesh:
    """Apply all planned collapses simultaneously.

    The adjacency is updated incrementally: rows of untouched faces are
    remapped, ring rows are rebuilt locally, and every row is re-sorted
    with the canonical slot order, so the result is bit-identical to a
    full rebuild on the new mesh.
    """
    F, V = mesh.num_faces, mesh.num_vertices
    if plan.face_remap.shape[0] != F or plan.vertex_remap.shape[0] != V:
        raise MeshError("pool plan does not match mesh")
    if features.shape[0] != F:
        raise MeshError("features do not match mesh")

    # surviving vertices keep their coordinates, merged ones get centroids
    new_verts = np.empty((plan.num_new_vertices, 3))
    keep_mask = np.ones(V, dtype=bool)
    for r in plan.regions:
        keep_mask[r.old_vertices] = False
    new_verts[plan.vertex_remap[keep_mask]] = mesh.vertices[keep_mask]
    for mid, r in zip(plan.merged_ids, plan.regions):
        new_verts[mid] = r.merged_vertex

    survive_f = plan.face_remap >= 0
    new_faces = plan.vertex_remap[mesh.faces[survive_f]]
    new_mesh = Mesh(new_verts, new_faces, label=mesh.label, name=mesh.name)

    # feature averaging per provenance
    C = features.shape[1]
    new_features = np.empty((plan.num_new_faces, C))
    for j, contrib in enumerate(plan.provenance):
        new_features[j] = features[contrib].sum(axis=0) / len(contrib)

    new_adj = _incremental_adjacency(mesh, adj, plan, new_mesh)
    record = PassRecord(provenance=plan.provenance, old_num_faces=F)
    return PooledMesh(mesh=new_mesh, adjacency=new_adj, features=new_features,
                      passes=[record], pass_count=1)


def _incremental_adjacency(mesh: Mesh, adj: AdjacencyMatrix, plan: PoolPlan,
                           new_mesh: Mesh) -> AdjacencyMatrix:
    survive = plan.face_remap >= 0
    Fn = plan.num_new_faces
    nb = adj.neighbors[survive].copy()
    safe = np.where(nb == NONE, 0, nb)
    remapped = np.where(nb == NONE, NONE, plan.face_remap[safe])
    # only ring rows reference removed faces (remap -1); rebuilt below
    edges = plan.vertex_remap[adj.shared_edges[survive]]
    edges = np.sort(edges, axis=2)

    # rebuild every ring row: edges through a merge point are re-paired
    # among the ring faces, the rest keep their (remapped) old neighbor
    n_plain = plan.num_new_vertices - len(plan.regions)
    old_of = {int(plan.face_remap[g]): g
              for r in plan.regions for g in r.ring}
    merged_edge_faces: dict[tuple[int, int], list[int]] = {}
    for j in old_of:
        tri = new_mesh.faces[j]
        for k in range(3):
            p, q = int(tri[k]), int(tri[(k + 1) % 3])
            e = (p, q) if p < q else (q, p)
            if e[1] >= n_plain:  # at least one endpoint is a merge point
                merged_edge_faces.setdefault(e, []).append(j)
    for j, g in old_of.items():
        tri = new_mesh.faces[j]
        row_nb, row_edge = [], []
        for k in range(3):
            p, q = int(tri[k]), int(tri[(k + 1) % 3])
            e = (p, q) if p < q else (q, p)
            if e[1] >= n_plain:
                pair = merged_edge_faces[e]
                row_nb.append(pair[0] if pair[1] == j else pair[1])
            else:
                # old edge unchanged: look up the old neighbor
                old_tri = mesh.faces[g]
                op, oq = int(old_tri[k]), int(old_tri[(k + 1) % 3])
                oe = (op, oq) if op < oq else (oq, op)
                onb = NONE
                for s in range(3):
                    if tuple(adj.shared_edges[g, s]) == oe:
                        onb = int(adj.neighbors[g, s])
                        break
                row_nb.append(NONE if onb == NONE else int(plan.face_remap[onb]))
            row_edge.append(e)
        edges[j] = row_edge
        remapped[j] = row_nb

    # canonical re-sort of every row: merged geometry changes ring edge
    # lengths, and remapped ids change tie-breaks even for untouched rows
    out_nb = np.empty_like(remapped)
    out_edges = np.empty_like(edges)
    for j in range(Fn):
        row_nb, row_edge = sort_adjacency_slots(
            new_mesh.vertices, [int(x) for x in remapped[j]],
            [tuple(e) for e in edges[j]], Fn)
        out_nb[j] = row_nb
        out_edges[j] = row_edge
    return AdjacencyMatrix(out_nb, out_edges)


def pool_to_target(mesh: Mesh, adj: AdjacencyMatrix, features: np.ndarray,
                   target: int, max_passes: int = 64) -> PooledMesh:
    """Repeat weight/plan/apply passes until the face count reaches the
    target band [target-3, target], or flag a stall."""
    if target < 4:
        raise ValueError("target face count must be >= 4")
    passes: list[PassRecord] = []
    current = PooledMesh(mesh=mesh, adjacency=adj, features=features)
    count = 0
    stalled = False
    while current.mesh.num_faces > target and count < max_passes:
        weights = compute_face_weights(current.features, current.adjacency)
        plan = plan_pass(current.mesh, current.adjacency, weights, target)
        if not plan.regions:
            stalled = True
            break
        nxt = apply_pass(current.mesh, current.adjacency, current.features, plan)
        passes.extend(nxt.passes)
        count += 1
        current = nxt
    return PooledMesh(mesh=current.mesh, adjacency=current.adjacency,
                      features=current.features, passes=passes,
                      pass_count=count, stalled=stalled)


def pooling_backward(passes: list[PassRecord], grad_out: np.ndarray) -> np.ndarray:
    """Adjoint of the feature averaging across all recorded passes.

    The discrete region selection is treated as constant (like max-pool
    indices): each contributing old face receives grad/m from every new
    face it was averaged into.
    """
    grad = grad_out
    for rec in reversed(passes):
        if grad.shape[0] != len(rec.provenance):
            raise ValueError("gradient rows do not match pass provenance")
        out = np.zeros((rec.old_num_faces, grad.shape[1]))
        for j, contrib in enumerate(rec.provenance):
            out[contrib] += grad[j] / len(contrib)
        grad = out
    return grad
