"""Triangle meshes: I/O, normals, multi-view rasterization, edge statistics.

The rasterizer is a plain z-buffer over pixel centers. Coverage uses
edge functions (all three same-signed, boundaries inclusive), depth and
normals interpolate barycentrically (perspective-correct when the
camera is perspective), and the nearest positive-depth fragment wins
with strict less-than, so triangle submission order breaks exact ties.
Tests hold it bit-equal to a per-pixel nearest-triangle oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .maps import NormalMap

__all__ = [
    "TriMesh",
    "Camera",
    "RenderView",
    "load_obj",
    "save_obj",
    "face_normals",
    "face_areas",
    "vertex_normals",
    "viewpoints",
    "rasterize_normals",
    "count_sharp_edges",
    "sharp_edge_report",
    "SharpEdgeReport",
    "dataset_stats",
    "DatasetStats",
    "stats_csv_row",
    "STATS_CSV_HEADER",
    "DETAILVERSE_REFERENCE_STATS",
    "cube_mesh",
    "icosahedron_mesh",
    "uv_sphere_mesh",
    "heightfield_to_mesh",
]


@dataclass
class TriMesh:
    vertices: np.ndarray          # (V, 3) float64, world units
    faces: np.ndarray             # (F, 3) int64, CCW outward
    vertex_norms: np.ndarray | None = None
    n_dropped_faces: int = 0

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValueError("face indices out of range")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)


# -- OBJ -----------------------------------------------------------------


def load_obj(source) -> TriMesh:
    """Parse the ASCII OBJ subset v / vn / f; fans are triangulated.

    Degenerate faces (repeated vertices or zero area) are dropped and
    counted on the returned mesh. Malformed input raises with its line
    number.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, Path):
        text = source.read_text()
    else:
        text = str(source)
        if "\n" not in text and text.endswith(".obj"):
            text = Path(text).read_text()

    verts: list[list[float]] = []
    norms: list[list[float]] = []
    face_idx: list[tuple[int, int, int]] = []
    dropped = 0

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "v":
                if len(parts) < 4:
                    raise ValueError("vertex needs 3 coordinates")
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif tag == "vn":
                if len(parts) < 4:
                    raise ValueError("normal needs 3 components")
                norms.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif tag == "f":
                if len(parts) < 4:
                    raise ValueError("face needs at least 3 vertices")
                ids = []
                for tok in parts[1:]:
                    vid = tok.split("/", 1)[0]
                    idx = int(vid)
                    if idx < 0:
                        idx = len(verts) + 1 + idx
                    if not 1 <= idx <= len(verts):
                        raise ValueError(f"vertex index {vid} out of range")
                    ids.append(idx - 1)
                for k in range(1, len(ids) - 1):  # fan split
                    face_idx.append((ids[0], ids[k], ids[k + 1]))
            # other tags ignored
        except ValueError as exc:
            raise ValueError(f"OBJ parse error at line {lineno}: {exc}") from None

    v = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    kept = []
    for f in face_idx:
        a, b, c = f
        if a == b or b == c or a == c:
            dropped += 1
            continue
        area2 = np.linalg.norm(np.cross(v[b] - v[a], v[c] - v[a]))
        if area2 == 0.0:
            dropped += 1
            continue
        kept.append(f)
    mesh = TriMesh(
        v,
        np.asarray(kept, dtype=np.int64).reshape(-1, 3),
        vertex_norms=np.asarray(norms, dtype=np.float64).reshape(-1, 3) if len(norms) == len(verts) else None,
        n_dropped_faces=dropped,
    )
    return mesh


def save_obj(path, mesh: TriMesh) -> None:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


# -- normals ---------------------------------------------------------------


def _face_cross(mesh: TriMesh) -> np.ndarray:
    v = mesh.vertices
    f = mesh.faces
    return np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])


def face_areas(mesh: TriMesh) -> np.ndarray:
    return 0.5 * np.linalg.norm(_face_cross(mesh), axis=1)


def face_normals(mesh: TriMesh) -> np.ndarray:
    cross = _face_cross(mesh)
    norm = np.linalg.norm(cross, axis=1, keepdims=True)
    return cross / np.maximum(norm, 1e-300)


def vertex_normals(mesh: TriMesh) -> np.ndarray:
    """Area-weighted average of incident face normals, unit length."""
    cross = _face_cross(mesh)  # |cross| = 2 * area, so summing is area weighting
    acc = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(acc, mesh.faces[:, k], cross)
    norm = np.linalg.norm(acc, axis=1, keepdims=True)
    out = np.where(norm > 1e-300, acc / np.maximum(norm, 1e-300), [0.0, 0.0, 1.0])
    return out


# -- cameras -----------------------------------------------------------------


@dataclass
class Camera:
    position: np.ndarray
    look_at: np.ndarray = field(default_factory=lambda: np.zeros(3))
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    mode: str = "orthographic"          # or "perspective"
    ortho_width: float = 2.5
    fov_y_deg: float = 40.0
    resolution: tuple[int, int] = (96, 96)  # (H, W)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.look_at = np.asarray(self.look_at, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)
        if self.mode not in ("orthographic", "perspective"):
            raise ValueError(f"unknown camera mode {self.mode!r}")
        fwd = self.look_at - self.position
        if np.linalg.norm(fwd) < 1e-12:
            raise ValueError("camera position coincides with look-at point")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Right-handed (right, up, forward); forward points at the target."""
        fwd = self.look_at - self.position
        fwd = fwd / np.linalg.norm(fwd)
        up = self.up
        if abs(float(np.dot(fwd, up)) / np.linalg.norm(up)) > 0.99:
            up = np.array([1.0, 0.0, 0.0])
        right = np.cross(fwd, up)
        right /= np.linalg.norm(right)
        true_up = np.cross(right, fwd)
        return right, true_up, fwd

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """World points -> (px, py, depth). Pixel centers sit at integers."""
        right, up, fwd = self.basis()
        d = points - self.position
        x = d @ right
        y = d @ up
        depth = d @ fwd
        h_px, w_px = self.resolution
        if self.mode == "orthographic":
            half_w = self.ortho_width / 2.0
            half_h = half_w * h_px / w_px
            px = (x + half_w) / (2.0 * half_w) * w_px - 0.5
            py = (half_h - y) / (2.0 * half_h) * h_px - 0.5
        else:
            tan_half = math.tan(math.radians(self.fov_y_deg) / 2.0)
            safe = np.where(np.abs(depth) > 1e-12, depth, 1e-12)
            xs = x / (safe * tan_half * (w_px / h_px))
            ys = y / (safe * tan_half)
            px = (xs * 0.5 + 0.5) * w_px - 0.5
            py = (0.5 - ys * 0.5) * h_px - 0.5
        return px, py, depth

    def to_camera_normals(self, normals: np.ndarray) -> np.ndarray:
        """World normals -> camera space with +z toward the viewer."""
        right, up, fwd = self.basis()
        return np.stack([normals @ right, normals @ up, -(normals @ fwd)], axis=-1)


@dataclass
class RenderView:
    normal_map: NormalMap
    depth: np.ndarray
    camera: Camera

    @property
    def mask(self) -> np.ndarray:
        return self.normal_map.mask


def viewpoints(
    n: int = 22,
    radius: float = 3.0,
    mode: str = "orthographic",
    resolution: tuple[int, int] = (96, 96),
    ortho_width: float = 2.5,
    fov_y_deg: float = 40.0,
) -> list[Camera]:
    """Deterministic near-uniform cameras on a Fibonacci sphere, all looking at the origin."""
    if n < 1:
        raise ValueError("need at least one viewpoint")
    golden = math.pi * (3.0 - math.sqrt(5.0))
    cams = []
    for i in range(n):
        z = 1.0 - (2.0 * i + 1.0) / n
        r = math.sqrt(max(0.0, 1.0 - z * z))
        phi = golden * i
        pos = np.array([r * math.cos(phi), r * math.sin(phi), z]) * radius
        cams.append(
            Camera(
                position=pos,
                mode=mode,
                resolution=resolution,
                ortho_width=ortho_width,
                fov_y_deg=fov_y_deg,
            )
        )
    return cams


# -- rasterizer ----------------------------------------------------------------


def rasterize_normals(mesh: TriMesh, camera: Camera) -> RenderView:
    """Render camera-space normals of ``mesh`` with a z-buffer.

    Per-pixel normals are barycentric interpolations of vertex normals,
    renormalized; background pixels carry mask False and the sentinel
    normal. Fragments at depth <= 0 (behind the camera plane) are culled.
    """
    h_px, w_px = camera.resolution
    zbuf = np.full((h_px, w_px), np.inf)
    nbuf = np.zeros((h_px, w_px, 3))
    nbuf[..., 2] = 1.0
    mask = np.zeros((h_px, w_px), dtype=bool)
    if mesh.n_faces == 0:
        return RenderView(NormalMap(nbuf, mask), zbuf, camera)

    px, py, depth = camera.project(mesh.vertices)
    n_cam = camera.to_camera_normals(
        mesh.vertex_norms if mesh.vertex_norms is not None else vertex_normals(mesh)
    )
    persp = camera.mode == "perspective"

    for f in mesh.faces:
        i0, i1, i2 = int(f[0]), int(f[1]), int(f[2])
        d0, d1, d2 = depth[i0], depth[i1], depth[i2]
        if d0 <= 0.0 and d1 <= 0.0 and d2 <= 0.0:
            continue
        x0, y0 = px[i0], py[i0]
        x1, y1 = px[i1], py[i1]
        x2, y2 = px[i2], py[i2]
        lo_x = max(0, int(math.ceil(min(x0, x1, x2))))
        hi_x = min(w_px - 1, int(math.floor(max(x0, x1, x2))))
        lo_y = max(0, int(math.ceil(min(y0, y1, y2))))
        hi_y = min(h_px - 1, int(math.floor(max(y0, y1, y2))))
        if lo_x > hi_x or lo_y > hi_y:
            continue
        gx, gy = np.meshgrid(
            np.arange(lo_x, hi_x + 1, dtype=np.float64),
            np.arange(lo_y, hi_y + 1, dtype=np.float64),
        )
        w0 = (x2 - x1) * (gy - y1) - (y2 - y1) * (gx - x1)
        w1 = (x0 - x2) * (gy - y2) - (y0 - y2) * (gx - x2)
        w2 = (x1 - x0) * (gy - y0) - (y1 - y0) * (gx - x0)
        inside = ((w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)) | ((w0 <= 0.0) & (w1 <= 0.0) & (w2 <= 0.0))
        wsum = w0 + w1 + w2
        inside &= wsum != 0.0
        if not inside.any():
            continue
        l0 = np.where(inside, w0 / np.where(wsum == 0.0, 1.0, wsum), 0.0)
        l1 = np.where(inside, w1 / np.where(wsum == 0.0, 1.0, wsum), 0.0)
        l2 = np.where(inside, w2 / np.where(wsum == 0.0, 1.0, wsum), 0.0)
        if persp:
            # perspective-correct: interpolate attributes over 1/depth
            q0 = l0 / d0
            q1 = l1 / d1
            q2 = l2 / d2
            qs = q0 + q1 + q2
            qs_safe = np.where(qs == 0.0, 1.0, qs)
            frag_depth = np.where(qs != 0.0, 1.0 / qs_safe, np.inf)
            a0, a1, a2 = q0 / qs_safe, q1 / qs_safe, q2 / qs_safe
        else:
            frag_depth = l0 * d0 + l1 * d1 + l2 * d2
            a0, a1, a2 = l0, l1, l2
        update = inside & (frag_depth > 0.0) & (frag_depth < zbuf[lo_y : hi_y + 1, lo_x : hi_x + 1])
        if not update.any():
            continue
        nx = a0 * n_cam[i0, 0] + a1 * n_cam[i1, 0] + a2 * n_cam[i2, 0]
        ny = a0 * n_cam[i0, 1] + a1 * n_cam[i1, 1] + a2 * n_cam[i2, 1]
        nz = a0 * n_cam[i0, 2] + a1 * n_cam[i1, 2] + a2 * n_cam[i2, 2]
        nlen = np.sqrt(nx * nx + ny * ny + nz * nz)
        nlen = np.where(nlen == 0.0, 1.0, nlen)
        sub = (slice(lo_y, hi_y + 1), slice(lo_x, hi_x + 1))
        zbuf[sub] = np.where(update, frag_depth, zbuf[sub])
        for c, comp in enumerate((nx / nlen, ny / nlen, nz / nlen)):
            nbuf[sub + (c,)] = np.where(update, comp, nbuf[sub + (c,)])
        mask[sub] |= update

    nbuf[~mask] = [0.0, 0.0, 1.0]
    return RenderView(NormalMap(nbuf, mask), zbuf, camera)


# -- sharp edges ----------------------------------------------------------------


@dataclass
class SharpEdgeReport:
    sharp_count: int
    nonmanifold_sharp_count: int
    interior_edges: int
    boundary_edges: int
    nonmanifold_edges: int


def sharp_edge_report(mesh: TriMesh, dihedral_threshold_deg: float = 30.0) -> SharpEdgeReport:
    """Classify mesh edges by adjacent-face-normal angle.

    Interior edges (2 faces) count as sharp above the threshold; boundary
    edges are excluded; non-manifold edges (>2 faces) count once if any
    adjacent face pair exceeds the threshold and are reported separately.
    """
    if not 0.0 < dihedral_threshold_deg < 180.0:
        raise ValueError("threshold must be in (0, 180) degrees")
    fn = face_normals(mesh)
    edge_faces: dict[tuple[int, int], list[int]] = {}
    for fi, (a, b, c) in enumerate(mesh.faces):
        for u, v in ((a, b), (b, c), (c, a)):
            key = (int(u), int(v)) if u < v else (int(v), int(u))
            edge_faces.setdefault(key, []).append(fi)

    sharp = nonmanifold_sharp = interior = boundary = nonmanifold = 0
    for faces in edge_faces.values():
        if len(faces) == 1:
            boundary += 1
            continue
        if len(faces) == 2:
            interior += 1
            dot = float(np.clip(np.dot(fn[faces[0]], fn[faces[1]]), -1.0, 1.0))
            if math.degrees(math.acos(dot)) > dihedral_threshold_deg:
                sharp += 1
            continue
        nonmanifold += 1
        exceeded = False
        for i in range(len(faces)):
            for j in range(i + 1, len(faces)):
                dot = float(np.clip(np.dot(fn[faces[i]], fn[faces[j]]), -1.0, 1.0))
                if math.degrees(math.acos(dot)) > dihedral_threshold_deg:
                    exceeded = True
        if exceeded:
            sharp += 1
            nonmanifold_sharp += 1
    return SharpEdgeReport(sharp, nonmanifold_sharp, interior, boundary, nonmanifold)


def count_sharp_edges(mesh: TriMesh, dihedral_threshold_deg: float = 30.0) -> int:
    return sharp_edge_report(mesh, dihedral_threshold_deg).sharp_count


# -- dataset statistics -----------------------------------------------------------


@dataclass
class DatasetStats:
    n_objects: int
    mean_sharp_edges: float
    median_sharp_edges: float
    counts: list[int] = field(default_factory=list)


def dataset_stats(meshes, dihedral_threshold_deg: float = 30.0) -> DatasetStats:
    """Mean/median sharp-edge counts; median is the lower middle for even n."""
    counts = [count_sharp_edges(m, dihedral_threshold_deg) for m in meshes]
    if not counts:
        raise ValueError("dataset_stats needs at least one mesh")
    ordered = sorted(counts)
    median = ordered[(len(ordered) - 1) // 2]
    return DatasetStats(len(counts), float(np.mean(counts)), float(median), counts)


STATS_CSV_HEADER = "Dataset,Obj #,Sharp Edge # (mean/median),Source"

# Published full-corpus reference row for the DetailVerse dataset; not
# reproducible at desk scale, kept for table formatting parity.
DETAILVERSE_REFERENCE_STATS = ("DetailVerse", 700_000, 45_773, 14_521, "Synthesis")


def stats_csv_row(name: str, stats_or_counts, source: str) -> str:
    if isinstance(stats_or_counts, DatasetStats):
        s = stats_or_counts
        mean, median, n = s.mean_sharp_edges, s.median_sharp_edges, s.n_objects
    else:
        name_, n, mean, median, source = stats_or_counts
        name = name or name_
    return f"{name},{n:,},{round(mean):,} / {round(median):,},{source}"


# -- primitive meshes -----------------------------------------------------------


def cube_mesh(size: float = 1.0) -> TriMesh:
    s = size / 2.0
    v = np.array(
        [[-s, -s, -s], [s, -s, -s], [s, s, -s], [-s, s, -s],
         [-s, -s, s], [s, -s, s], [s, s, s], [-s, s, s]]
    )
    quads = [
        (0, 3, 2, 1),  # bottom (-z)
        (4, 5, 6, 7),  # top (+z)
        (0, 1, 5, 4),  # -y
        (2, 3, 7, 6),  # +y
        (1, 2, 6, 5),  # +x
        (3, 0, 4, 7),  # -x
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return TriMesh(v, np.array(faces))


def icosahedron_mesh(radius: float = 1.0) -> TriMesh:
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    raw = np.array(
        [[-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
         [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
         [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1]],
        dtype=np.float64,
    )
    raw *= radius / np.linalg.norm(raw[0])
    faces = np.array(
        [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    )
    return TriMesh(raw, faces)


def uv_sphere_mesh(n_lat: int = 24, n_lon: int = 48, radius: float = 1.0) -> TriMesh:
    verts = [np.array([0.0, 0.0, radius])]
    for i in range(1, n_lat):
        theta = math.pi * i / n_lat
        for j in range(n_lon):
            phi = 2.0 * math.pi * j / n_lon
            verts.append(
                radius
                * np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
            )
    verts.append(np.array([0.0, 0.0, -radius]))
    v = np.array(verts)
    south = len(verts) - 1

    def ring(i, j):
        return 1 + (i - 1) * n_lon + (j % n_lon)

    faces = []
    for j in range(n_lon):
        faces.append((0, ring(1, j), ring(1, j + 1)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append((a, c, d))
            faces.append((a, d, b))
    for j in range(n_lon):
        faces.append((south, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)))
    return TriMesh(v, np.array(faces))


def heightfield_to_mesh(hf) -> TriMesh:
    """Triangulate a heightfield grid (x right, y up, z = height)."""
    h, w = hf.shape
    cell = hf.cell_size
    cols, rows = np.meshgrid(np.arange(w), np.arange(h))
    x = (cols - (w - 1) / 2.0) * cell
    y = ((h - 1) / 2.0 - rows) * cell
    v = np.stack([x.ravel(), y.ravel(), hf.heights.ravel()], axis=1)

    def vid(r, c):
        return r * w + c

    faces = []
    for r in range(h - 1):
        for c in range(w - 1):
            faces.append((vid(r, c), vid(r + 1, c), vid(r, c + 1)))
            faces.append((vid(r + 1, c), vid(r + 1, c + 1), vid(r, c + 1)))
    return TriMesh(v, np.array(faces))
