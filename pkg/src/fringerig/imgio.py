"""File formats: PFM / PGM / PPM images, ASCII PLY clouds, and CSV tables.

PFM files are written grayscale, 32-bit float, little-endian (negative scale
line), with rows stored bottom-to-top per the format convention. PGM/PPM are
the binary (P5/P6) variants with maxval 255.
"""

from __future__ import annotations

import numpy as np

from .errors import FileFormatError


def write_pfm(path, image: np.ndarray) -> None:
    data = np.asarray(image, dtype=np.float32)
    if data.ndim != 2:
        raise ValueError("only grayscale PFM is supported")
    height, width = data.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{width} {height}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(np.flipud(data).astype("<f4").tobytes())


def _read_token(fh) -> bytes:
    # whitespace-delimited header token
    token = b""
    while True:
        c = fh.read(1)
        if not c:
            raise FileFormatError("unexpected end of PFM header")
        if c.isspace():
            if token:
                return token
            continue
        token += c


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = _read_token(fh)
        if magic != b"Pf":
            raise FileFormatError(f"not a grayscale PFM file: magic {magic!r}")
        try:
            width = int(_read_token(fh))
            height = int(_read_token(fh))
            scale = float(_read_token(fh))
        except ValueError as exc:
            raise FileFormatError(f"invalid PFM header: {exc}") from exc
        dtype = "<f4" if scale < 0 else ">f4"
        raw = fh.read(width * height * 4)
        if len(raw) != width * height * 4:
            raise FileFormatError("truncated PFM pixel data")
        data = np.frombuffer(raw, dtype=dtype).reshape(height, width)
        return np.flipud(data).astype(np.float32)


def write_pgm(path, image: np.ndarray) -> None:
    """Write an 8-bit grayscale PGM; float inputs are taken as [0, 1]."""
    data = np.asarray(image)
    if data.dtype != np.uint8:
        data = (np.clip(data, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    height, width = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if _read_token(fh) != b"P5":
            raise FileFormatError("not a binary PGM file")
        try:
            width = int(_read_token(fh))
            height = int(_read_token(fh))
            maxval = int(_read_token(fh))
        except ValueError as exc:
            raise FileFormatError(f"invalid PGM header: {exc}") from exc
        if maxval != 255:
            raise FileFormatError("only maxval 255 PGM is supported")
        raw = fh.read(width * height)
        if len(raw) != width * height:
            raise FileFormatError("truncated PGM pixel data")
        return np.frombuffer(raw, dtype=np.uint8).reshape(height, width).copy()


def write_ppm(path, rgb: np.ndarray) -> None:
    data = np.asarray(rgb)
    if data.dtype != np.uint8:
        data = (np.clip(data, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    if data.ndim != 3 or data.shape[2] != 3:
        raise ValueError("PPM input must be (height, width, 3)")
    height, width = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if _read_token(fh) != b"P6":
            raise FileFormatError("not a binary PPM file")
        width = int(_read_token(fh))
        height = int(_read_token(fh))
        maxval = int(_read_token(fh))
        if maxval != 255:
            raise FileFormatError("only maxval 255 PPM is supported")
        raw = fh.read(width * height * 3)
        if len(raw) != width * height * 3:
            raise FileFormatError("truncated PPM pixel data")
        return np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3).copy()


# ---------------------------------------------------------------------------
# PLY point clouds
# ---------------------------------------------------------------------------


def write_ply(path, points: np.ndarray) -> None:
    """Write an ASCII PLY with float x, y, z vertex properties in mm."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must be (N, 3)")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("ply\n")
        fh.write("format ascii 1.0\n")
        fh.write(f"element vertex {pts.shape[0]}\n")
        fh.write("property float x\n")
        fh.write("property float y\n")
        fh.write("property float z\n")
        fh.write("end_header\n")
        for x, y, z in pts:
            fh.write(f"{x:.6f} {y:.6f} {z:.6f}\n")


def read_ply(path) -> np.ndarray:
    """Read an ASCII PLY with x, y, z float vertex properties."""
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        line = fh.readline().strip()
        if line != "ply":
            raise FileFormatError("not a PLY file (missing 'ply' magic)")
        fmt = fh.readline().strip()
        if fmt != "format ascii 1.0":
            raise FileFormatError(f"unsupported PLY format line: {fmt!r}")
        count = None
        props: list[str] = []
        while True:
            line = fh.readline()
            if not line:
                raise FileFormatError("PLY header missing end_header")
            line = line.strip()
            if line.startswith("comment"):
                continue
            if line.startswith("element vertex"):
                try:
                    count = int(line.split()[-1])
                except ValueError as exc:
                    raise FileFormatError("invalid vertex count") from exc
            elif line.startswith("element"):
                raise FileFormatError("only vertex elements are supported")
            elif line.startswith("property"):
                props.append(line.split()[-1])
            elif line == "end_header":
                break
        if count is None:
            raise FileFormatError("PLY header missing vertex element")
        if props[:3] != ["x", "y", "z"]:
            raise FileFormatError("PLY vertex properties must start with x, y, z")
        pts = np.empty((count, 3))
        for i in range(count):
            line = fh.readline()
            if not line:
                raise FileFormatError(f"truncated PLY: expected {count} vertices")
            parts = line.split()
            if len(parts) < 3:
                raise FileFormatError(f"malformed PLY vertex line {i}")
            try:
                pts[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
            except ValueError as exc:
                raise FileFormatError(f"malformed PLY vertex line {i}") from exc
        return pts


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------

TRAJECTORY_HEADER = "time_s,displacement_mm"


def write_timeseries_csv(path, times: np.ndarray, values: np.ndarray, header=TRAJECTORY_HEADER) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(header + "\n")
        for t, d in zip(times, values):
            fh.write(f"{t:.9g},{d:.9g}\n")


def read_timeseries_csv(path, header=TRAJECTORY_HEADER) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "r", encoding="ascii") as fh:
        first = fh.readline().strip()
        if first != header:
            raise FileFormatError(f"expected header {header!r}, got {first!r}")
        times = []
        values = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise FileFormatError(f"line {lineno}: expected two comma-separated values")
            try:
                times.append(float(parts[0]))
                values.append(float(parts[1]))
            except ValueError as exc:
                raise FileFormatError(f"line {lineno}: non-numeric value") from exc
    return np.asarray(times), np.asarray(values)
