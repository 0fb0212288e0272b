import importlib.util
import json
import pathlib

import numpy as np
import pytest

import hmrk

ROOT = pathlib.Path(__file__).resolve().parents[2]
spec = importlib.util.spec_from_file_location("convert_smpl", ROOT / "tools" / "convert_smpl.py")
convert_smpl = importlib.util.module_from_spec(spec)
spec.loader.exec_module(convert_smpl)


@pytest.fixture(scope="module")
def body():
    return hmrk.synth_template()


def write_npz(path, body, posedirs=None):
    n = body.num_vertices
    arrays = dict(
        v_template=body.rest_vertices,
        shapedirs=body.shape_blendshapes.reshape(n, 3, 10),
        J_regressor=body.joint_regressor,
        weights=body.skin_weights,
        kintree_table=np.stack([np.array(body.parents), np.arange(24)]),
        f=body.faces,
    )
    if posedirs is not None:
        arrays["posedirs"] = posedirs
    np.savez(path, **arrays)


def dump_kps(tmp_path, body):
    path = tmp_path / "kps.json"
    kps = [{k: ({str(v): w for v, w in x.items()} if k == "weights" else x) for k, x in kp.items()}
           for kp in body.keypoints]
    path.write_text(json.dumps(kps))
    return path


def test_round_trip_matches_template(tmp_path, body):
    write_npz(tmp_path / "m.npz", body)
    args = [str(tmp_path / "m.npz"), str(tmp_path / "m.hmrk"), "--keypoints", str(dump_kps(tmp_path, body))]
    assert convert_smpl.main(args) == 0
    loaded = hmrk.load_model(str(tmp_path / "m.hmrk"))
    rng = np.random.default_rng(4)
    shape, pose = rng.normal(size=10), rng.uniform(-0.6, 0.6, size=69)
    a = hmrk.pose_body(body, shape, pose)
    b = hmrk.pose_body(loaded, shape, pose)
    for k in ("mesh", "joints", "keypoints"):
        assert np.abs(a[k] - b[k]).max() < 1e-12


def test_pose_blendshapes_carried(tmp_path, body):
    n = body.num_vertices
    posedirs = np.random.default_rng(5).normal(scale=1e-3, size=(n, 3, 207))
    write_npz(tmp_path / "p.npz", body, posedirs)
    loaded = convert_smpl.convert(tmp_path / "p.npz", body.keypoints)
    assert np.array_equal(loaded.pose_blendshapes, posedirs.reshape(3 * n, 207))
    zero = hmrk.pose_body(loaded, np.zeros(10), np.zeros(69))["mesh"]
    assert np.abs(zero - body.rest_vertices).max() < 1e-12
    dropped = convert_smpl.convert(tmp_path / "p.npz", body.keypoints, pose_blendshapes=False)
    assert dropped.pose_blendshapes is None


def test_default_keypoints_need_smpl_mesh(tmp_path, body):
    write_npz(tmp_path / "m.npz", body)
    with pytest.raises(hmrk.HmrkError, match="invalid_model"):
        convert_smpl.convert(tmp_path / "m.npz")

