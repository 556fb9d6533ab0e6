"""Snapshot container: versioned binary file with a JSON header.

Layout: magic ``DSNP``, uint32 version, uint32 header length, UTF-8 JSON
header, then raw little-endian float32 arrays in a fixed order (deformable
set, static set, MLP layers, MLP heads sorted by name). Per primitive the
stride is position 3 + rotation 4 + log_scale 3 + opacity 1 + SH k*3.
Loading restores float64 working arrays; a load/save round trip is
bit-identical.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from .deformation import DeformConfig, DeformationField, RotationMode, ScaleMode
from .errors import FormatError
from .gaussians import GaussianSet
from .training import Scene, TrainConfig

MAGIC = b"DSNP"
VERSION = 1


def _set_arrays(gset: GaussianSet):
    return gset.astype32()


def _write_array(buf, arr):
    buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def save_snapshot(scene: Scene, path, config: TrainConfig | None = None,
                  iteration: int = 0, camera_meta: dict | None = None) -> None:
    field = scene.field
    header = {
        "format_version": VERSION,
        "iteration": int(iteration),
        "counts": {"deformable": len(scene.deformable), "static": len(scene.static)},
        "sh_coeff_count": scene.deformable.sh_coeffs.shape[1],
        "scene_extent": float(scene.scene_extent),
        "deform_config": {
            "scale_mode": scene.deform_config.scale_mode.value,
            "rotation_mode": scene.deform_config.rotation_mode.value,
            "deform_opacity": scene.deform_config.deform_opacity,
            "deform_sh": scene.deform_config.deform_sh,
        },
        "field": {
            "l_x": field.l_x, "l_t": field.l_t, "depth": field.depth,
            "width": field.width, "skip_at": field.skip_at,
            "layer_shapes": [[list(W.shape), list(b.shape)] for W, b in field.layers],
            "head_dims": dict(sorted(field.head_dims.items())),
        },
        "train_config": config.to_dict() if config is not None else None,
        "camera": camera_meta,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(header_bytes)))
    buf.write(header_bytes)
    for gset in (scene.deformable, scene.static):
        for arr in _set_arrays(gset):
            _write_array(buf, arr)
    for W, b in field.layers:
        _write_array(buf, W)
        _write_array(buf, b)
    for name in sorted(field.heads):
        W, b = field.heads[name]
        _write_array(buf, W)
        _write_array(buf, b)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


class _Reader:
    def __init__(self, data: bytes, offset: int):
        self.data = data
        self.offset = offset

    def take(self, shape) -> np.ndarray:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if self.offset + nbytes > len(self.data):
            raise IOError("snapshot truncated")
        arr = np.frombuffer(self.data, dtype="<f4", count=count, offset=self.offset)
        self.offset += nbytes
        return arr.reshape(shape).astype(float)


def load_snapshot(path) -> tuple[Scene, dict]:
    """Returns (Scene, header dict)."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:4] != MAGIC:
        raise FormatError(f"not a snapshot file: {path}")
    version, header_len = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise FormatError(f"unsupported snapshot version {version}")
    if len(data) < 12 + header_len:
        raise IOError("snapshot truncated in header")
    try:
        header = json.loads(data[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"snapshot header unreadable: {e}")

    k = header["sh_coeff_count"]
    reader = _Reader(data, 12 + header_len)

    def read_set(n):
        return GaussianSet(
            reader.take((n, 3)), reader.take((n, 4)), reader.take((n, 3)),
            reader.take((n,)), reader.take((n, k, 3)),
        )

    deformable = read_set(header["counts"]["deformable"])
    static = read_set(header["counts"]["static"])

    fmeta = header["field"]
    dcfg_meta = header["deform_config"]
    field = DeformationField(
        l_x=fmeta["l_x"], l_t=fmeta["l_t"], depth=fmeta["depth"],
        width=fmeta["width"], skip_at=fmeta["skip_at"], sh_coeff_count=k,
        deform_opacity=dcfg_meta["deform_opacity"], deform_sh=dcfg_meta["deform_sh"],
    )
    for i, (w_shape, b_shape) in enumerate(fmeta["layer_shapes"]):
        field.layers[i] = (reader.take(tuple(w_shape)), reader.take(tuple(b_shape)))
    for name in sorted(field.heads):
        dim = fmeta["head_dims"][name]
        field.heads[name] = (reader.take((dim, fmeta["width"])), reader.take((dim,)))

    deform_config = DeformConfig(
        scale_mode=ScaleMode(dcfg_meta["scale_mode"]),
        rotation_mode=RotationMode(dcfg_meta["rotation_mode"]),
        deform_opacity=dcfg_meta["deform_opacity"],
        deform_sh=dcfg_meta["deform_sh"],
    )
    scene = Scene(deformable, static, field, header["scene_extent"], deform_config)
    return scene, header
