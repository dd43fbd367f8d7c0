"""File formats: meshes (OBJ, PLY), cameras, depth maps (PFM + raw),
cluster tables, cull masks, densification plans and scene bundles.

Floats in text formats are written with repr() so float64 values
round-trip bit-exactly; binary formats are little-endian. Point-list
interchange (anchors, plans) is packed 3x float32 per point.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .camera import Camera, normalize_convention
from .clusters import Cluster
from .densify import DensificationPlan, ErrorImage
from .mesh import TriangleMesh
from .raster import DepthMap
from .scene import PipelineConfig, SceneBundle
from .visibility import AnchorSet, CullMask, VERDICT_NAMES

CLUSTER_MAGIC = b"PXCL"
CLUSTER_VERSION = 1


class FormatError(ValueError):
    """Raised on malformed input files, with file/line context."""


# -- meshes -------------------------------------------------------------------

def save_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "w") as f:
        f.write("# proxycull mesh\n")
        for v in mesh.vertices:
            f.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for a, b, c in mesh.faces:
            f.write(f"f {a + 1} {b + 1} {c + 1}\n")


def load_obj(path) -> TriangleMesh:
    verts = []
    faces = []
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                if parts[0] == "v":
                    verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
                elif parts[0] == "f":
                    idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                    for k in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
            except (ValueError, IndexError) as exc:
                raise FormatError(f"{path}:{lineno}: bad OBJ record {line!r}: {exc}") from exc
    return TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                        np.array(faces, dtype=np.int32).reshape(-1, 3))


def save_ply(mesh: TriangleMesh, path, binary: bool = True) -> None:
    nv, nf = len(mesh.vertices), len(mesh.faces)
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        f"ply\nformat {fmt} 1.0\ncomment proxycull mesh\n"
        f"element vertex {nv}\n"
        "property double x\nproperty double y\nproperty double z\n"
        f"element face {nf}\n"
        "property list uchar int vertex_indices\nend_header\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        if binary:
            f.write(mesh.vertices.astype("<f8").tobytes())
            for a, b, c in mesh.faces:
                f.write(struct.pack("<Biii", 3, a, b, c))
        else:
            for v in mesh.vertices:
                f.write(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n".encode("ascii"))
            for a, b, c in mesh.faces:
                f.write(f"3 {a} {b} {c}\n".encode("ascii"))


def load_ply(path) -> TriangleMesh:
    with open(path, "rb") as f:
        blob = f.read()
    try:
        head_end = blob.index(b"end_header\n") + len(b"end_header\n")
    except ValueError:
        raise FormatError(f"{path}: missing PLY end_header")
    header = blob[:head_end].decode("ascii", errors="replace").splitlines()
    if not header or header[0].strip() != "ply":
        raise FormatError(f"{path}: not a PLY file")
    fmt = None
    counts = {}
    props: dict[str, list[str]] = {}
    current = None
    for line in header[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            current = parts[1]
            counts[current] = int(parts[2])
            props[current] = []
        elif parts[0] == "property" and current is not None:
            props[current].append(" ".join(parts[1:]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise FormatError(f"{path}: unsupported PLY format {fmt!r}")
    nv = counts.get("vertex", 0)
    nf = counts.get("face", 0)
    vprops = props.get("vertex", [])
    type_map = {"float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8"}
    vtypes = []
    for spec in vprops:
        t, _name = spec.split()[0], spec.split()[-1]
        if t not in type_map:
            raise FormatError(f"{path}: unsupported vertex property type {t!r}")
        vtypes.append(type_map[t])
    if len(vtypes) < 3:
        raise FormatError(f"{path}: PLY vertex element needs x, y, z")
    body = blob[head_end:]
    if fmt == "ascii":
        text = body.decode("ascii").split()
        stride = len(vtypes)
        verts = np.array([float(x) for x in text[:nv * stride]], dtype=np.float64)
        verts = verts.reshape(nv, stride)[:, :3]
        pos = nv * stride
        faces = []
        for _ in range(nf):
            cnt = int(text[pos]); pos += 1
            poly = [int(text[pos + k]) for k in range(cnt)]; pos += cnt
            for k in range(1, cnt - 1):
                faces.append([poly[0], poly[k], poly[k + 1]])
        return TriangleMesh(verts, np.array(faces, dtype=np.int32).reshape(-1, 3))
    vert_dtype = np.dtype([(f"p{i}", t) for i, t in enumerate(vtypes)])
    verts_rec = np.frombuffer(body, dtype=vert_dtype, count=nv)
    verts = np.stack([verts_rec[f"p{i}"].astype(np.float64) for i in range(3)], axis=1)
    offset = nv * vert_dtype.itemsize
    faces = []
    pos = offset
    for _ in range(nf):
        cnt = body[pos]; pos += 1
        poly = struct.unpack_from(f"<{cnt}i", body, pos); pos += 4 * cnt
        for k in range(1, cnt - 1):
            faces.append([poly[0], poly[k], poly[k + 1]])
    return TriangleMesh(verts, np.array(faces, dtype=np.int32).reshape(-1, 3))


def load_mesh(path) -> TriangleMesh:
    path = Path(path)
    if path.suffix.lower() == ".obj":
        return load_obj(path)
    if path.suffix.lower() == ".ply":
        return load_ply(path)
    raise FormatError(f"{path}: unknown mesh extension (expected .obj or .ply)")


def save_mesh(mesh: TriangleMesh, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".obj":
        save_obj(mesh, path)
    elif path.suffix.lower() == ".ply":
        save_ply(mesh, path)
    else:
        raise FormatError(f"{path}: unknown mesh extension (expected .obj or .ply)")


# -- cameras ---------------------------------------------------------------------

_CAMERA_FIELDS = ("width", "height", "near", "far", "view_matrix", "proj_matrix",
                  "rotation", "center", "intrinsics")


def save_camera(camera: Camera, path) -> None:
    """Key-value camera document.

    Fields: width, height (ints); near, far (floats); view_matrix (16
    floats, row-major world-to-view); proj_matrix (16 floats, view-to-clip);
    rotation (9 floats, world-to-camera); center (3 floats, camera origin);
    intrinsics (9 floats, pixels). Floats are repr()'d for exact round trips.
    """
    with open(path, "w") as f:
        f.write("# proxycull camera v1\n")
        f.write(f"width: {camera.width}\n")
        f.write(f"height: {camera.height}\n")
        f.write(f"near: {float(camera.near)!r}\n")
        f.write(f"far: {float(camera.far)!r}\n")
        for name in ("view_matrix", "proj_matrix", "rotation", "center", "intrinsics"):
            vals = " ".join(repr(float(x)) for x in np.asarray(getattr(camera, name)).ravel())
            f.write(f"{name}: {vals}\n")


def load_camera(path) -> Camera:
    fields: dict[str, str] = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise FormatError(f"{path}:{lineno}: expected 'key: value'")
            key, value = line.split(":", 1)
            fields[key.strip()] = value.strip()
    missing = [k for k in _CAMERA_FIELDS if k not in fields]
    if missing:
        raise FormatError(f"{path}: missing camera fields {missing}")
    try:
        shapes = {"view_matrix": (4, 4), "proj_matrix": (4, 4), "rotation": (3, 3),
                  "center": (3,), "intrinsics": (3, 3)}
        arrays = {}
        for name, shape in shapes.items():
            vals = np.array([float(x) for x in fields[name].split()])
            if vals.size != int(np.prod(shape)):
                raise FormatError(f"{path}: field {name} needs {int(np.prod(shape))} values, got {vals.size}")
            arrays[name] = vals.reshape(shape)
        view, proj = normalize_convention(arrays["view_matrix"], arrays["proj_matrix"])
        rot = arrays["rotation"] if np.allclose(view[:3, :3], arrays["rotation"]) else view[:3, :3]
        cam = Camera(view, proj, rot, arrays["center"], arrays["intrinsics"],
                     float(fields["near"]), float(fields["far"]),
                     int(fields["width"]), int(fields["height"]))
    except FormatError:
        raise
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return cam


# -- depth maps ----------------------------------------------------------------

def save_pfm(values: np.ndarray, path) -> None:
    """Grayscale little-endian PFM; rows stored bottom-to-top per the format."""
    arr = np.asarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise FormatError("PFM writer expects a 2-D grid")
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{arr.shape[1]} {arr.shape[0]}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(arr[::-1].tobytes())


def load_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"Pf":
            raise FormatError(f"{path}: expected grayscale PFM magic 'Pf', got {magic!r}")
        dims = f.readline().split()
        width, height = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        data = f.read(width * height * 4)
    if len(data) != width * height * 4:
        raise FormatError(f"{path}: truncated PFM payload")
    dtype = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(data, dtype=dtype).reshape(height, width)
    return np.ascontiguousarray(arr[::-1]).astype(np.float32)


def save_depth_raw(depth: DepthMap, path) -> None:
    """Raw little-endian float32 rows (top-down) plus a JSON sidecar."""
    path = Path(path)
    path.write_bytes(depth.values.astype("<f4").tobytes())
    sidecar = {
        "width": int(depth.width),
        "height": int(depth.height),
        "near": float(depth.near),
        "far": float(depth.far),
        "dtype": "<f4",
        "row_order": "top-down",
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n")


def load_depth_raw(path) -> DepthMap:
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    if not sidecar_path.exists():
        raise FormatError(f"{sidecar_path}: missing raw-depth sidecar")
    meta = json.loads(sidecar_path.read_text())
    w, h = int(meta["width"]), int(meta["height"])
    blob = path.read_bytes()
    if len(blob) != w * h * 4:
        raise FormatError(f"{path}: expected {w * h * 4} bytes, got {len(blob)}")
    values = np.frombuffer(blob, dtype="<f4").reshape(h, w).copy()
    return DepthMap(values, float(meta["near"]), float(meta["far"])).validate()


def save_depth_pfm(depth: DepthMap, path) -> None:
    save_pfm(depth.values, path)


def load_error_image(path) -> ErrorImage:
    return ErrorImage(load_pfm(path).astype(np.float64)).validate()


# -- point lists (anchors, plans) -------------------------------------------------

def save_points_f32(points: np.ndarray, path) -> None:
    Path(path).write_bytes(np.asarray(points, dtype="<f4").reshape(-1, 3).tobytes())


def load_points_f32(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) % 12 != 0:
        raise FormatError(f"{path}: point payload not a multiple of 12 bytes")
    return np.frombuffer(blob, dtype="<f4").reshape(-1, 3).astype(np.float64)


def save_plan(plan: DensificationPlan, path) -> None:
    path = Path(path)
    save_points_f32(plan.new_anchor_positions, path)
    meta = {
        "count": int(len(plan.new_anchor_positions)),
        "rejected_count": plan.rejected_count,
        "sources": [{"frame": f, "patch_x": x, "patch_y": y} for f, x, y in plan.sources],
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n")


def load_plan(path) -> DensificationPlan:
    path = Path(path)
    positions = load_points_f32(path)
    meta_path = path.with_suffix(path.suffix + ".json")
    if not meta_path.exists():
        raise FormatError(f"{meta_path}: missing plan sidecar")
    meta = json.loads(meta_path.read_text())
    sources = [(s["frame"], s["patch_x"], s["patch_y"]) for s in meta.get("sources", [])]
    return DensificationPlan(positions, sources, int(meta.get("rejected_count", 0)))


# -- cluster tables -----------------------------------------------------------------

def save_clusters(clusters: list[Cluster], path) -> None:
    with open(path, "wb") as f:
        f.write(CLUSTER_MAGIC)
        f.write(struct.pack("<II", CLUSTER_VERSION, len(clusters)))
        for c in clusters:
            f.write(struct.pack("<I", len(c.triangle_indices)))
            f.write(c.aabb_min.astype("<f8").tobytes())
            f.write(c.aabb_max.astype("<f8").tobytes())
            f.write(c.triangle_indices.astype("<u4").tobytes())


def load_clusters(path) -> list[Cluster]:
    blob = Path(path).read_bytes()
    if blob[:4] != CLUSTER_MAGIC:
        raise FormatError(f"{path}: bad cluster magic {blob[:4]!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != CLUSTER_VERSION:
        raise FormatError(f"{path}: unsupported cluster format version {version}")
    pos = 12
    clusters = []
    for _ in range(count):
        (ntris,) = struct.unpack_from("<I", blob, pos); pos += 4
        lo = np.frombuffer(blob, dtype="<f8", count=3, offset=pos); pos += 24
        hi = np.frombuffer(blob, dtype="<f8", count=3, offset=pos); pos += 24
        idx = np.frombuffer(blob, dtype="<u4", count=ntris, offset=pos); pos += 4 * ntris
        clusters.append(Cluster(idx.astype(np.int64), lo.copy(), hi.copy()))
    return clusters


# -- cull masks -------------------------------------------------------------------

def save_cull_mask(mask: CullMask, path, camera_id: int = 0) -> None:
    path = Path(path)
    path.write_bytes(mask.verdicts.tobytes())
    summary = {"counts": mask.counts(), "gamma": float(mask.gamma),
               "camera_id": int(camera_id), "anchors": int(len(mask.verdicts))}
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n")


def load_cull_mask(path) -> CullMask:
    path = Path(path)
    verdicts = np.frombuffer(path.read_bytes(), dtype=np.uint8).copy()
    if verdicts.size and verdicts.max() > max(VERDICT_NAMES):
        raise FormatError(f"{path}: verdict byte out of range")
    meta_path = path.with_suffix(path.suffix + ".json")
    gamma = 0.0
    if meta_path.exists():
        gamma = float(json.loads(meta_path.read_text()).get("gamma", 0.0))
    return CullMask(verdicts, gamma)


# -- scene bundles ------------------------------------------------------------------

class SceneError(ValueError):
    """Scene loading failed; message lists every violation found."""


def save_scene(bundle: SceneBundle, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_ply(bundle.proxy_mesh, directory / "proxy.ply")
    save_points_f32(bundle.anchors.positions, directory / "anchors.f32")
    camera_files = []
    for i, cam in enumerate(bundle.cameras):
        name = f"camera_{i:03d}.cam"
        save_camera(cam, directory / name)
        camera_files.append(name)
    manifest = {
        "format": "proxycull-scene",
        "version": 1,
        "mesh": "proxy.ply",
        "anchors": "anchors.f32",
        "cameras": camera_files,
        "config": bundle.config.to_dict(),
    }
    if bundle.clusters is not None:
        save_clusters(bundle.clusters, directory / "clusters.pxcl")
        manifest["clusters"] = "clusters.pxcl"
    (directory / "scene.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return directory / "scene.json"


def load_scene(path) -> SceneBundle:
    """Load and exhaustively validate a scene bundle (dir or manifest path)."""
    path = Path(path)
    manifest_path = path / "scene.json" if path.is_dir() else path
    if not manifest_path.exists():
        raise SceneError(f"{manifest_path}: manifest not found")
    base = manifest_path.parent
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneError(f"{manifest_path}: invalid JSON: {exc}") from exc
    if manifest.get("format") != "proxycull-scene":
        raise SceneError(f"{manifest_path}: not a proxycull scene manifest")

    errors: list[str] = []
    mesh = None
    anchors = None
    cameras: list[Camera] = []
    clusters = None
    config = PipelineConfig()
    try:
        config = PipelineConfig.from_dict(manifest.get("config", {}))
    except ValueError as exc:
        errors.append(f"config: {exc}")
    try:
        mesh = load_mesh(base / manifest["mesh"])
        errors.extend(f"mesh: {e}" for e in mesh.invariant_violations())
    except (KeyError, OSError, FormatError) as exc:
        errors.append(f"mesh: {exc}")
    try:
        anchors = AnchorSet(load_points_f32(base / manifest["anchors"]))
        if not np.all(np.isfinite(anchors.positions)):
            errors.append("anchors: non-finite positions")
    except (KeyError, OSError, FormatError) as exc:
        errors.append(f"anchors: {exc}")
    for name in manifest.get("cameras", []):
        try:
            cam = load_camera(base / name)
            cam_errs = cam.invariant_violations()
            if cam_errs:
                errors.extend(f"camera {name}: {e}" for e in cam_errs)
            else:
                cameras.append(cam)
        except (OSError, FormatError) as exc:
            errors.append(f"camera {name}: {exc}")
    if not manifest.get("cameras"):
        errors.append("cameras: none listed in manifest")
    if "clusters" in manifest:
        try:
            clusters = load_clusters(base / manifest["clusters"])
            if mesh is not None:
                all_idx = (np.concatenate([c.triangle_indices for c in clusters])
                           if clusters else np.empty(0, dtype=np.int64))
                if clusters and (len(np.unique(all_idx)) != len(all_idx)
                                 or len(all_idx) != len(mesh.faces)):
                    errors.append("clusters: do not partition the face set")
        except (OSError, FormatError) as exc:
            errors.append(f"clusters: {exc}")
    if errors:
        raise SceneError("; ".join(errors))
    return SceneBundle(mesh, cameras, anchors, config, clusters)
