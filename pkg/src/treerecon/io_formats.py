"""File formats: ASCII PLY clouds, PFM float rasters, PPM images, JSON manifests.

Byte-level contracts:
  - PLY: ascii 1.0; vertex properties x y z (float) and red green blue
    (uchar, color*255 rounded half-up); optional uchar `class` (0 trunk,
    1 foliage). Positions are written at float32 precision.
  - PFM: grayscale `Pf`, scale -1.0 (little-endian float32), rows written
    bottom-to-top; row v = 0 is the bottom (smallest y).
  - PPM: binary `P6`, maxval 255, same color rounding as PLY.
  - Manifest: JSON with exactly {seed, grid, sun, files, generator_version};
    unknown or missing fields are rejected. Rasters carry no georeference
    themselves; the grid spec lives only in the manifest.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import Grid, GridSpec, PointCloud, RgbGrid, SunConfig
from .errors import (
    MalformedManifest,
    MalformedPfm,
    MalformedPly,
    MalformedPpm,
    SpecMismatch,
)

GENERATOR_VERSION = "treerecon-0.1.0"


def _color_to_uchar(c: np.ndarray) -> np.ndarray:
    """round-half-up of c*255 into uint8"""
    return np.floor(np.clip(c, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


# ---------------------------------------------------------------------------
# PLY


def write_ply(cloud: PointCloud, path) -> None:
    n = len(cloud)
    colors = cloud.colors if cloud.colors is not None else np.ones((n, 3))
    rgb = _color_to_uchar(colors)
    pos = cloud.positions.astype(np.float32)
    has_class = cloud.classes is not None
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {n}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
    ]
    if has_class:
        lines.append("property uchar class")
    lines.append("end_header")
    for i in range(n):
        row = f"{pos[i, 0]:.9g} {pos[i, 1]:.9g} {pos[i, 2]:.9g} {rgb[i, 0]} {rgb[i, 1]} {rgb[i, 2]}"
        if has_class:
            row += f" {cloud.classes[i]}"
        lines.append(row)
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path) -> PointCloud:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise MalformedPly(f"cannot read {path}: {e}") from e
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MalformedPly("missing 'ply' magic", line=1)

    n = None
    props: list[str] = []
    body_start = None
    for ln, raw in enumerate(lines[1:], start=2):
        tok = raw.split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            if tok[1:] != ["ascii", "1.0"]:
                raise MalformedPly("only 'format ascii 1.0' supported", line=ln)
        elif tok[0] == "element":
            if tok[1] != "vertex" or len(tok) != 3:
                raise MalformedPly("only a single vertex element supported", line=ln)
            try:
                n = int(tok[2])
            except ValueError:
                raise MalformedPly("bad vertex count", line=ln) from None
        elif tok[0] == "property":
            if len(tok) != 3:
                raise MalformedPly("bad property line", line=ln)
            props.append(tok[2])
        elif tok[0] == "end_header":
            body_start = ln
            break
        else:
            raise MalformedPly(f"unexpected header token {tok[0]!r}", line=ln)
    if n is None or body_start is None:
        raise MalformedPly("header missing element vertex or end_header")
    expected = ["x", "y", "z", "red", "green", "blue"]
    has_class = props == expected + ["class"]
    if not has_class and props != expected:
        raise MalformedPly(f"unsupported property layout {props}")

    n_fields = 7 if has_class else 6
    positions = np.zeros((n, 3))
    colors = np.zeros((n, 3))
    classes = np.zeros(n, dtype=np.uint8) if has_class else None
    body = lines[body_start : body_start + n]
    if len(body) < n:
        raise MalformedPly(f"expected {n} vertex rows, found {len(body)}")
    for i, raw in enumerate(body):
        ln = body_start + 1 + i
        tok = raw.split()
        if len(tok) != n_fields:
            raise MalformedPly(f"expected {n_fields} fields", line=ln)
        try:
            positions[i] = [float(np.float32(t)) for t in tok[:3]]
            rgb = [int(t) for t in tok[3:6]]
            if has_class:
                classes[i] = int(tok[6])
        except ValueError:
            raise MalformedPly("non-numeric vertex field", line=ln) from None
        if any(c < 0 or c > 255 for c in rgb):
            raise MalformedPly("color out of uchar range", line=ln)
        colors[i] = np.array(rgb) / 255.0
    return PointCloud(positions=positions, colors=colors, classes=classes)


# ---------------------------------------------------------------------------
# PFM / PPM


def write_pfm(grid: Grid, path) -> None:
    h, w = grid.spec.height, grid.spec.width
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    data = grid.values.astype("<f4").tobytes()  # row v=0 first = bottom-to-top
    Path(path).write_bytes(header + data)


def read_pfm(path, spec: GridSpec | None = None) -> Grid:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise MalformedPfm(f"cannot read {path}: {e}") from e
    try:
        magic_end = raw.index(b"\n")
        dims_end = raw.index(b"\n", magic_end + 1)
        scale_end = raw.index(b"\n", dims_end + 1)
        magic = raw[:magic_end].decode("ascii").strip()
        w, h = map(int, raw[magic_end + 1 : dims_end].split())
        scale = float(raw[dims_end + 1 : scale_end])
    except (ValueError, IndexError) as e:
        raise MalformedPfm(f"bad PFM header: {e}") from e
    if magic != "Pf":
        raise MalformedPfm(f"expected grayscale 'Pf', got {magic!r}")
    if scale >= 0:
        raise MalformedPfm("only little-endian (negative scale) PFM supported")
    body = raw[scale_end + 1 :]
    if len(body) != w * h * 4:
        raise MalformedPfm(f"expected {w * h * 4} data bytes, got {len(body)}")
    values = np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(h, w)
    if spec is None:
        spec = GridSpec(width=w, height=h)
    elif spec.width != w or spec.height != h:
        raise SpecMismatch(
            f"PFM is {w}x{h} but manifest grid is {spec.width}x{spec.height}"
        )
    return Grid(spec, values)


def write_ppm(grid: RgbGrid, path) -> None:
    h, w = grid.spec.height, grid.spec.width
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + _color_to_uchar(grid.values).tobytes())


def read_ppm(path, spec: GridSpec | None = None) -> RgbGrid:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise MalformedPpm(f"cannot read {path}: {e}") from e
    try:
        magic_end = raw.index(b"\n")
        dims_end = raw.index(b"\n", magic_end + 1)
        maxval_end = raw.index(b"\n", dims_end + 1)
        magic = raw[:magic_end].decode("ascii").strip()
        w, h = map(int, raw[magic_end + 1 : dims_end].split())
        maxval = int(raw[dims_end + 1 : maxval_end])
    except (ValueError, IndexError) as e:
        raise MalformedPpm(f"bad PPM header: {e}") from e
    if magic != "P6":
        raise MalformedPpm(f"expected binary 'P6', got {magic!r}")
    if maxval != 255:
        raise MalformedPpm("only maxval 255 supported")
    body = raw[maxval_end + 1 :]
    if len(body) != w * h * 3:
        raise MalformedPpm(f"expected {w * h * 3} data bytes, got {len(body)}")
    values = np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3) / 255.0
    if spec is None:
        spec = GridSpec(width=w, height=h)
    elif spec.width != w or spec.height != h:
        raise SpecMismatch(
            f"PPM is {w}x{h} but manifest grid is {spec.width}x{spec.height}"
        )
    return RgbGrid(spec, values)


# ---------------------------------------------------------------------------
# scene manifest


@dataclass(frozen=True)
class SceneFiles:
    ortho: str = "ortho.ppm"
    dsm: str = "dsm.pfm"
    silhouette: str = "silhouette.pfm"
    shadow: str = "shadow.pfm"
    cloud: str = "gt.ply"


@dataclass(frozen=True)
class Manifest:
    seed: int
    grid: GridSpec
    sun: SunConfig
    files: SceneFiles = SceneFiles()
    generator_version: str = GENERATOR_VERSION


def write_manifest(manifest: Manifest, path) -> None:
    doc = {
        "seed": manifest.seed,
        "grid": asdict(manifest.grid),
        "sun": asdict(manifest.sun),
        "files": asdict(manifest.files),
        "generator_version": manifest.generator_version,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _take(doc: dict, field: str, where: str):
    if field not in doc:
        raise MalformedManifest(f"missing field {where}{field}")
    return doc.pop(field)


def _reject_unknown(doc: dict, where: str):
    if doc:
        raise MalformedManifest(f"unknown field {where}{next(iter(doc))}")


def read_manifest(path) -> Manifest:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as e:
        raise MalformedManifest(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise MalformedManifest(f"invalid JSON: {e}", line=e.lineno) from e
    if not isinstance(doc, dict):
        raise MalformedManifest("manifest root must be an object")
    doc = dict(doc)
    try:
        seed = int(_take(doc, "seed", ""))
        grid_doc = dict(_take(doc, "grid", ""))
        sun_doc = dict(_take(doc, "sun", ""))
        files_doc = dict(_take(doc, "files", ""))
        version = str(_take(doc, "generator_version", ""))
        _reject_unknown(doc, "")
        grid = GridSpec(
            width=int(_take(grid_doc, "width", "grid.")),
            height=int(_take(grid_doc, "height", "grid.")),
            origin_x=float(_take(grid_doc, "origin_x", "grid.")),
            origin_y=float(_take(grid_doc, "origin_y", "grid.")),
            pixel_size=float(_take(grid_doc, "pixel_size", "grid.")),
        )
        _reject_unknown(grid_doc, "grid.")
        sun = SunConfig(
            azimuth_deg=float(_take(sun_doc, "azimuth_deg", "sun.")),
            elevation_deg=float(_take(sun_doc, "elevation_deg", "sun.")),
        )
        _reject_unknown(sun_doc, "sun.")
        files = SceneFiles(
            ortho=str(_take(files_doc, "ortho", "files.")),
            dsm=str(_take(files_doc, "dsm", "files.")),
            silhouette=str(_take(files_doc, "silhouette", "files.")),
            shadow=str(_take(files_doc, "shadow", "files.")),
            cloud=str(_take(files_doc, "cloud", "files.")),
        )
        _reject_unknown(files_doc, "files.")
    except (TypeError, ValueError) as e:
        raise MalformedManifest(f"bad field value: {e}") from e
    return Manifest(seed=seed, grid=grid, sun=sun, files=files, generator_version=version)


# ---------------------------------------------------------------------------
# whole-scene persistence


def save_scene(scene, out_dir) -> None:
    """Write one synthetic scene directory (rasters, GT cloud, manifest)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = SceneFiles()
    write_ppm(scene.ortho, out / files.ortho)
    write_pfm(scene.dsm, out / files.dsm)
    write_pfm(scene.silhouette, out / files.silhouette)
    write_pfm(scene.shadow, out / files.shadow)
    write_ply(scene.cloud, out / files.cloud)
    write_manifest(
        Manifest(seed=scene.seed, grid=scene.spec, sun=scene.sun, files=files),
        out / "manifest.json",
    )


@dataclass
class LoadedScene:
    manifest: Manifest
    ortho: RgbGrid
    dsm: Grid
    silhouette: Grid
    shadow: Grid
    cloud: PointCloud


def load_scene(scene_dir) -> LoadedScene:
    d = Path(scene_dir)
    manifest = read_manifest(d / "manifest.json")
    spec = manifest.grid
    return LoadedScene(
        manifest=manifest,
        ortho=read_ppm(d / manifest.files.ortho, spec),
        dsm=read_pfm(d / manifest.files.dsm, spec),
        silhouette=read_pfm(d / manifest.files.silhouette, spec),
        shadow=read_pfm(d / manifest.files.shadow, spec),
        cloud=read_ply(d / manifest.files.cloud),
    )
