"""Triangle meshes with edge adjacency, plus the plain-text loader and the
parametric lamp solids used by the synthetic scenes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Edge3D:
    """Mesh edge between two 3D points; adjacent_faces holds 0-2 face ids."""

    point_a: np.ndarray
    point_b: np.ndarray
    adjacent_faces: tuple = ()

    def __post_init__(self):
        a = np.asarray(self.point_a, dtype=float).reshape(3)
        b = np.asarray(self.point_b, dtype=float).reshape(3)
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "point_a", a)
        object.__setattr__(self, "point_b", b)
        if np.array_equal(a, b):
            raise InvalidArgumentError("degenerate edge: identical endpoints")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.point_b - self.point_a))


@dataclass(frozen=True)
class TriMesh:
    """Triangle mesh with per-face unit normals and per-edge face adjacency.

    Edges are unique unordered vertex pairs; an edge adjacent to more than two
    faces (non-manifold) is rejected.
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_normals: np.ndarray = field(init=False)
    edge_vertices: np.ndarray = field(init=False)   # (E, 2) vertex ids
    edge_faces: tuple = field(init=False)           # per edge, tuple of face ids

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=float).reshape(-1, 3))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64).reshape(-1, 3))
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise InvalidArgumentError("face index out of range")
        normals = np.zeros((len(f), 3))
        for i, (a, b, c) in enumerate(f):
            n = np.cross(v[b] - v[a], v[c] - v[a])
            norm = np.linalg.norm(n)
            if norm < 1e-12:
                raise InvalidArgumentError(f"face {i} is degenerate")
            normals[i] = n / norm
        adjacency: dict = {}
        for i, (a, b, c) in enumerate(f):
            for pair in ((a, b), (b, c), (c, a)):
                key = (min(pair), max(pair))
                adjacency.setdefault(key, []).append(i)
        for key, fs in adjacency.items():
            if len(fs) > 2:
                raise InvalidArgumentError(f"non-manifold edge {key}: {len(fs)} faces")
        keys = sorted(adjacency)
        ev = np.array(keys, dtype=np.int64).reshape(-1, 2)
        ef = tuple(tuple(adjacency[k]) for k in keys)
        for arr in (v, f, normals, ev):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "face_normals", normals)
        object.__setattr__(self, "edge_vertices", ev)
        object.__setattr__(self, "edge_faces", ef)

    @property
    def n_edges(self) -> int:
        return len(self.edge_vertices)

    def edge(self, index: int) -> Edge3D:
        ia, ib = self.edge_vertices[index]
        return Edge3D(self.vertices[ia], self.vertices[ib],
                      self.edge_faces[index])

    def opposite_vertex(self, face_index: int, ia: int, ib: int) -> int:
        """The face's vertex that is not ia or ib."""
        for idx in self.faces[face_index]:
            if idx != ia and idx != ib:
                return int(idx)
        raise InvalidArgumentError("edge vertices do not belong to face")


def load_mesh(path) -> TriMesh:
    """Plain-text mesh: 'nv nf' header, nv vertex lines (3 floats, meters),
    nf face lines (3 zero-based indices). Non-triangular faces are rejected."""
    with open(path) as f:
        tokens_per_line = [ln.split() for ln in f if ln.strip() and not ln.startswith("#")]
    if not tokens_per_line:
        raise InvalidArgumentError(f"{path}: empty mesh file")
    head = tokens_per_line[0]
    if len(head) != 2:
        raise InvalidArgumentError(f"{path}: header must be 'n_vertices n_faces'")
    nv, nf = int(head[0]), int(head[1])
    if len(tokens_per_line) != 1 + nv + nf:
        raise InvalidArgumentError(f"{path}: expected {1 + nv + nf} lines, found {len(tokens_per_line)}")
    verts = []
    for ln in tokens_per_line[1:1 + nv]:
        if len(ln) != 3:
            raise InvalidArgumentError(f"{path}: vertex line needs 3 coordinates")
        verts.append([float(x) for x in ln])
    faces = []
    for ln in tokens_per_line[1 + nv:]:
        if len(ln) != 3:
            raise InvalidArgumentError(f"{path}: only triangular faces are supported")
        faces.append([int(x) for x in ln])
    return TriMesh(np.array(verts), np.array(faces))


def save_mesh(mesh: TriMesh, path) -> None:
    with open(path, "w") as f:
        f.write(f"{len(mesh.vertices)} {len(mesh.faces)}\n")
        for v in mesh.vertices:
            f.write(f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for a, b, c in mesh.faces:
            f.write(f"{a} {b} {c}\n")


def make_box(size_x: float, size_y: float, size_z: float) -> TriMesh:
    """Axis-aligned box centered at the origin, outward normals."""
    hx, hy, hz = size_x / 2.0, size_y / 2.0, size_z / 2.0
    v = np.array([[sx * hx, sy * hy, sz * hz]
                  for sz in (-1, 1) for sy in (-1, 1) for sx in (-1, 1)], dtype=float)
    # vertex ids: bit0 = +x, bit1 = +y, bit2 = +z
    quads = [
        (0, 2, 3, 1),  # -z, seen from below
        (4, 5, 7, 6),  # +z
        (0, 1, 5, 4),  # -y
        (2, 6, 7, 3),  # +y
        (0, 4, 6, 2),  # -x
        (1, 3, 7, 5),  # +x
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append([a, b, c])
        faces.append([a, c, d])
    return TriMesh(v, np.array(faces))


def make_prism(radius: float, height: float, n_sides: int = 32) -> TriMesh:
    """Extruded regular polygon centered at the origin, axis along z."""
    if n_sides < 3:
        raise InvalidArgumentError("prism needs at least 3 sides")
    hz = height / 2.0
    ring = [(radius * math.cos(2 * math.pi * k / n_sides),
             radius * math.sin(2 * math.pi * k / n_sides)) for k in range(n_sides)]
    verts = [[x, y, -hz] for x, y in ring] + [[x, y, hz] for x, y in ring]
    verts += [[0.0, 0.0, -hz], [0.0, 0.0, hz]]
    cb, ct = 2 * n_sides, 2 * n_sides + 1
    faces = []
    for k in range(n_sides):
        k2 = (k + 1) % n_sides
        faces.append([k, k2, n_sides + k2])       # side, outward
        faces.append([k, n_sides + k2, n_sides + k])
        faces.append([cb, k2, k])                 # bottom fan, normal -z
        faces.append([ct, n_sides + k, n_sides + k2])  # top fan, normal +z
    return TriMesh(np.array(verts, dtype=float), np.array(faces))
