"""File formats: PFM float images, 16-bit PNG masks, PLY clouds, OBJ meshes.

PFM stores float32 scanlines bottom-to-top; we always write little-endian
(negative scale header). Six-channel stacks (e.g. per-light weights) are
stored as a standard 3-channel PFM of doubled height: plane for channels
0..2 on top of the plane for channels 3..5. ``write_pfm``/``read_pfm``
handle the stacking transparently when ``channels=6`` is requested.
"""

from __future__ import annotations

import re

import numpy as np
from PIL import Image

from ..errors import MissingInput


# --------------------------------------------------------------------- PFM
def write_pfm(path, data: np.ndarray) -> None:
    """Write (h,w), (h,w,1), (h,w,3) or (h,w,6) float data as PFM."""
    a = np.asarray(data, dtype=np.float32)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim == 3 and a.shape[2] == 6:
        a = np.concatenate([a[:, :, :3], a[:, :, 3:]], axis=0)
    if a.ndim == 2:
        header = b"Pf\n"
    elif a.ndim == 3 and a.shape[2] == 3:
        header = b"PF\n"
    else:
        raise ValueError(f"unsupported PFM shape {np.shape(data)}")
    h, w = a.shape[:2]
    with open(path, "wb") as f:
        f.write(header)
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")  # negative scale = little endian
        f.write(a[::-1].astype("<f4").tobytes())


def read_pfm(path, channels: int | None = None) -> np.ndarray:
    """Read a PFM file to float64. ``channels=6`` unstacks a doubled-height
    3-channel file back to (h, w, 6)."""
    with open(path, "rb") as f:
        head = f.readline().strip()
        if head == b"PF":
            nch = 3
        elif head == b"Pf":
            nch = 1
        else:
            raise ValueError(f"not a PFM file: {path}")
        dims = f.readline().decode()
        m = re.match(r"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise ValueError(f"bad PFM size line: {dims!r}")
        w, h = int(m.group(1)), int(m.group(2))
        scale = float(f.readline().decode().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        raw = np.frombuffer(f.read(), dtype=dtype, count=w * h * nch)
    a = raw.reshape(h, w, nch)[::-1].astype(np.float64)
    if nch == 1:
        a = a[:, :, 0]
    if channels == 6:
        if nch != 3 or h % 2 != 0:
            raise ValueError("6-channel PFM must be a doubled-height 3-channel file")
        half = h // 2
        a = np.concatenate([a[:half], a[half:]], axis=2)
    return a


# --------------------------------------------------------------------- PNG
def write_png16(path, data: np.ndarray) -> None:
    """Write a (h, w) array as 16-bit grayscale PNG.

    Bool arrays map to {0, 65535}; floats are clipped to [0, 1] and scaled.
    """
    a = np.asarray(data)
    if a.dtype == bool:
        a = a.astype(np.uint16) * np.uint16(65535)
    elif np.issubdtype(a.dtype, np.floating):
        a = np.round(np.clip(a, 0.0, 1.0) * 65535.0).astype(np.uint16)
    else:
        a = a.astype(np.uint16)
    Image.fromarray(a).save(path)


def read_png16(path) -> np.ndarray:
    """Read a grayscale PNG to uint16 (8-bit files are upscaled)."""
    img = Image.open(path)
    a = np.asarray(img)
    if a.dtype == np.uint8:
        a = a.astype(np.uint16) * np.uint16(257)
    return a.astype(np.uint16)


def read_mask_png(path) -> np.ndarray:
    return read_png16(path) >= 32768


# --------------------------------------------------------------------- PLY
def write_ply(path, points: np.ndarray, normals: np.ndarray | None = None) -> None:
    """Binary little-endian PLY with xyz (+ optional nxnynz) float32."""
    pts = np.asarray(points, dtype="<f4").reshape(-1, 3)
    props = ["property float x", "property float y", "property float z"]
    cols = [pts]
    if normals is not None:
        nrm = np.asarray(normals, dtype="<f4").reshape(-1, 3)
        if nrm.shape[0] != pts.shape[0]:
            raise ValueError("normals/points count mismatch")
        props += ["property float nx", "property float ny", "property float nz"]
        cols.append(nrm)
    body = np.concatenate(cols, axis=1).astype("<f4")
    with open(path, "wb") as f:
        f.write(b"ply\nformat binary_little_endian 1.0\n")
        f.write(f"element vertex {pts.shape[0]}\n".encode())
        f.write(("\n".join(props) + "\nend_header\n").encode())
        f.write(body.tobytes())


def read_ply(path):
    """Read our PLY subset. Returns (points, normals-or-None)."""
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"ply":
            raise ValueError(f"not a PLY file: {path}")
        fmt = None
        nvert = 0
        props: list[str] = []
        while True:
            line = f.readline()
            if not line:
                raise ValueError("truncated PLY header")
            tok = line.decode().strip().split()
            if not tok:
                continue
            if tok[0] == "format":
                fmt = tok[1]
            elif tok[0] == "element" and tok[1] == "vertex":
                nvert = int(tok[2])
            elif tok[0] == "property" and len(tok) == 3:
                props.append(tok[2])
            elif tok[0] == "end_header":
                break
        ncol = len(props)
        if fmt == "binary_little_endian":
            data = np.frombuffer(f.read(4 * nvert * ncol), dtype="<f4")
            data = data.reshape(nvert, ncol).astype(np.float64)
        elif fmt == "ascii":
            rows = [f.readline().decode().split() for _ in range(nvert)]
            data = np.asarray(rows, dtype=np.float64)
        else:
            raise ValueError(f"unsupported PLY format {fmt}")
    idx = {p: i for i, p in enumerate(props)}
    pts = data[:, [idx["x"], idx["y"], idx["z"]]]
    normals = None
    if "nx" in idx:
        normals = data[:, [idx["nx"], idx["ny"], idx["nz"]]]
    return pts, normals


# --------------------------------------------------------------------- OBJ
def write_obj(path, vertices: np.ndarray, faces: np.ndarray) -> None:
    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    tris = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    with open(path, "w") as f:
        for v in verts:
            f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in tris:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def read_obj(path):
    """Parse v/f records; polygons are fan-triangulated. Returns (verts, faces)."""
    verts = []
    faces = []
    try:
        fh = open(path)
    except FileNotFoundError as e:
        raise MissingInput(str(e)) from e
    with fh:
        for line in fh:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "v":
                verts.append([float(x) for x in tok[1:4]])
            elif tok[0] == "f":
                idx = [int(t.split("/")[0]) - 1 for t in tok[1:]]
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64)
