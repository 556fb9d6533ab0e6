import numpy as np
import pytest

from conftest import orbit_camera, random_gaussian_set
from dynasplat.deformation import DeformationField
from dynasplat.errors import FormatError
from dynasplat.gaussians import GaussianSet
from dynasplat.snapshot import load_snapshot, save_snapshot
from dynasplat.training import Scene, TrainConfig, render_scene


def make_scene(rng, n_def=8, n_static=5, width=16, depth=3):
    field = DeformationField(l_x=4, l_t=4, depth=depth, width=width, skip_at=2,
                             rng=rng and np.random.default_rng(4))
    return Scene(random_gaussian_set(rng, n_def),
                 random_gaussian_set(rng, n_static),
                 field, scene_extent=3.5)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_round_trip_bit_identical(tmp_path, seed):
    rng = np.random.default_rng(seed)
    scene = make_scene(rng, n_def=int(rng.integers(1, 20)),
                       n_static=int(rng.integers(0, 10)))
    p1 = tmp_path / "a.snap"
    p2 = tmp_path / "b.snap"
    save_snapshot(scene, p1, config=TrainConfig(), iteration=123,
                  camera_meta={"camera_angle_x": 1.0, "width": 64, "height": 48})
    loaded, header = load_snapshot(p1)
    assert header["iteration"] == 123
    save_snapshot(loaded, p2, config=TrainConfig(), iteration=123,
                  camera_meta={"camera_angle_x": 1.0, "width": 64, "height": 48})
    assert p1.read_bytes() == p2.read_bytes()


def test_loaded_values_match_float32_cast(tmp_path, rng):
    scene = make_scene(rng)
    save_snapshot(scene, tmp_path / "s.snap")
    loaded, _ = load_snapshot(tmp_path / "s.snap")
    assert np.array_equal(loaded.deformable.positions,
                          scene.deformable.positions.astype(np.float32).astype(float))
    assert np.array_equal(loaded.static.sh_coeffs,
                          scene.static.sh_coeffs.astype(np.float32).astype(float))
    for (name_a, pa), (name_b, pb) in zip(loaded.field.named_params(),
                                          scene.field.named_params()):
        assert name_a == name_b
        assert np.array_equal(pa, pb.astype(np.float32).astype(float))


def test_corrupt_magic(tmp_path, rng):
    scene = make_scene(rng)
    path = tmp_path / "s.snap"
    save_snapshot(scene, path)
    data = bytearray(path.read_bytes())
    data[:4] = b"XXXX"
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError):
        load_snapshot(path)


def test_bad_version(tmp_path, rng):
    scene = make_scene(rng)
    path = tmp_path / "s.snap"
    save_snapshot(scene, path)
    data = bytearray(path.read_bytes())
    data[4] = 99
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError):
        load_snapshot(path)


def test_truncated_file(tmp_path, rng):
    scene = make_scene(rng)
    path = tmp_path / "s.snap"
    save_snapshot(scene, path)
    data = path.read_bytes()
    path.write_bytes(data[:len(data) - 40])
    with pytest.raises(IOError):
        load_snapshot(path)


def test_renders_identically_after_round_trip(tmp_path, rng):
    # cast to storage precision first, then compare renders bit-for-bit
    scene = make_scene(rng)
    save_snapshot(scene, tmp_path / "once.snap")
    stored, _ = load_snapshot(tmp_path / "once.snap")
    save_snapshot(stored, tmp_path / "twice.snap")
    again, _ = load_snapshot(tmp_path / "twice.snap")
    pose_rng = np.random.default_rng(8)
    for _ in range(5):
        cam = orbit_camera(24, 24, azimuth=pose_rng.uniform(0, 2 * np.pi),
                           height_z=pose_rng.uniform(-0.5, 1.5))
        t = float(pose_rng.uniform())
        a = render_scene(stored, cam, t, (1, 1, 1)).image
        b = render_scene(again, cam, t, (1, 1, 1)).image
        assert np.array_equal(a, b)


def test_render_close_to_pre_save(tmp_path, rng):
    # float32 storage quantizes parameters; renders stay close
    scene = make_scene(rng)
    save_snapshot(scene, tmp_path / "s.snap")
    loaded, _ = load_snapshot(tmp_path / "s.snap")
    cam = orbit_camera(24, 24)
    a = render_scene(scene, cam, 0.3, (1, 1, 1)).image
    b = render_scene(loaded, cam, 0.3, (1, 1, 1)).image
    assert np.max(np.abs(a - b)) < 1e-4


def test_deform_config_persisted(tmp_path, rng):
    from dynasplat.deformation import DeformConfig, RotationMode, ScaleMode
    scene = make_scene(rng)
    scene.deform_config = DeformConfig(scale_mode=ScaleMode.POST_EXP,
                                       rotation_mode=RotationMode.ADD)
    save_snapshot(scene, tmp_path / "s.snap")
    loaded, _ = load_snapshot(tmp_path / "s.snap")
    assert loaded.deform_config.scale_mode is ScaleMode.POST_EXP
    assert loaded.deform_config.rotation_mode is RotationMode.ADD
