"""Binary raw-capture format.

Body: little-endian signed 16-bit integers laid out
``[frame][rx][chirp][sample][I, Q]`` with no header. A text sidecar
``<file>.hdr`` (JSON) records the scale that maps counts back to sample
units, together with the hash of the radar configuration that produced it.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .config import DataCube, DataError, RadarConfig, validate_cube

log = logging.getLogger(__name__)

INT16_MAX = 32767
FULL_SCALE_FRACTION = 0.9
_DTYPE = np.dtype("<i2")


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".hdr")


def expected_nbytes(config: RadarConfig) -> int:
    nf, nrx, nc, ns = config.cube_shape
    return nf * nrx * nc * ns * 2 * _DTYPE.itemsize


def _iter_blocks(source, block: int):
    for start in range(0, source.num_frames, block):
        yield source.frames(start, min(start + block, source.num_frames))


def write_raw(source, path: str | Path, scale: float | None = None, block_frames: int = 256) -> float:
    """Write a cube (or any frame source) and its sidecar; returns the scale used.

    Without an explicit ``scale`` the largest |I| or |Q| in the cube is mapped
    to 90 % of int16 full scale. Sources that are not in memory are read
    twice in that case (once for the peak, once for writing).
    """
    path = Path(path)
    config = source.config
    if scale is None:
        peak = 0.0
        for chunk in _iter_blocks(source, block_frames):
            if not np.all(np.isfinite(chunk)):
                raise DataError("cube contains non-finite samples")
            if chunk.size:
                peak = max(peak, float(np.max(np.abs(chunk.view(float)))))
        scale = FULL_SCALE_FRACTION * INT16_MAX / peak if peak > 0 else 1.0
    if not scale > 0:
        raise DataError(f"scale must be > 0, got {scale}")
    with open(path, "wb") as fh:
        for chunk in _iter_blocks(source, block_frames):
            counts = np.rint(np.ascontiguousarray(chunk).view(float) * scale)
            if counts.size and np.max(np.abs(counts)) > INT16_MAX:
                raise DataError("samples overflow int16 at the requested scale")
            fh.write(counts.astype(_DTYPE).tobytes())
    header = {
        "format": "int16le-iq",
        "layout": ["frame", "rx", "chirp", "sample", "iq"],
        "shape": list(config.cube_shape),
        "scale": scale,
        "full_scale": INT16_MAX / scale,
        "config_hash": config.digest(),
    }
    sidecar_path(path).write_text(json.dumps(header, indent=2) + "\n")
    return scale


def _read_scale(path: Path, config: RadarConfig) -> float:
    side = sidecar_path(path)
    if not side.exists():
        log.info("no sidecar for %s; treating samples as raw ADC counts", path)
        return 1.0
    try:
        header = json.loads(side.read_text())
        scale = float(header["scale"])
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{side}: unreadable sidecar ({exc})") from exc
    if header.get("config_hash") not in (None, config.digest()):
        log.warning("%s was written with a different radar configuration", path)
    return scale


class RawFileSource:
    """Memory-mapped raw capture exposing ``frames(start, stop)``."""

    def __init__(self, path: str | Path, config: RadarConfig):
        path = Path(path)
        try:
            size = path.stat().st_size
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
        if size != expected_nbytes(config):
            raise DataError(
                f"{path}: {size} bytes, expected {expected_nbytes(config)} for cube shape {config.cube_shape}"
            )
        self.path = path
        self.config = config
        self.num_frames = config.num_frames
        self.scale = _read_scale(path, config)
        nf, nrx, nc, ns = config.cube_shape
        self._counts = np.memmap(path, dtype=_DTYPE, mode="r", shape=(nf, nrx, nc, ns, 2))

    def frames(self, start: int, stop: int) -> np.ndarray:
        block = np.asarray(self._counts[start:stop], dtype=float)
        return block.view(complex)[..., 0] / self.scale


def read_raw(path: str | Path, config: RadarConfig) -> DataCube:
    src = RawFileSource(path, config)
    return validate_cube(DataCube(config, src.frames(0, src.num_frames)))
