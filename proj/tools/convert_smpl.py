#!/usr/bin/env python3
"""Convert SMPL-layout arrays into an hmrk body model file.

Input is an .npz with the usual SMPL array names:

    v_template    (N, 3)
    shapedirs     (N, 3, B)     B >= 10, the first 10 are kept
    J_regressor   (24, N)       dense, or a scipy sparse matrix saved via allow_pickle
    weights       (N, 24)
    kintree_table (2, 24)       row 0 holds parents (root entry ignored)
    f             (F, 3)
    posedirs      (N, 3, 207)   optional, dropped with --no-pose-blendshapes

Extract these from a licensed .pkl yourself; the pickle needs chumpy and is
not read here.

Keypoints default to the 19-point layout: 12 limb joints and the neck copied
from J_regressor rows, head top and five face points taken as mesh vertices.
Override with --keypoints keypoints.json, a list of
{"name": ..., "vertex": v} or {"name": ..., "weights": {"v": w, ...}}.

    python tools/convert_smpl.py smpl_neutral.npz body_model.hmrk
"""

import argparse
import json
import sys

import numpy as np

import hmrk

LIMB_JOINTS = [8, 5, 2, 1, 4, 7, 21, 19, 17, 16, 18, 20]
NECK_JOINT = 12
# SMPL vertex ids.
HEAD_VERTICES = {"head_top": 411, "nose": 332, "l_eye": 2800, "r_eye": 6260, "l_ear": 583, "r_ear": 4071}
NAMES = ["r_ankle", "r_knee", "r_hip", "l_hip", "l_knee", "l_ankle", "r_wrist", "r_elbow", "r_shoulder",
         "l_shoulder", "l_elbow", "l_wrist", "neck", "head_top", "nose", "l_eye", "r_eye", "l_ear", "r_ear"]


def dense(a):
    if a.dtype == object:
        a = a.item()
    return np.asarray(a.todense() if hasattr(a, "todense") else a, dtype=np.float64)


def regressor_row(row):
    nz = np.flatnonzero(row)
    return {int(v): float(row[v]) for v in nz}


def default_keypoints(jreg):
    kps = [{"name": NAMES[i], "weights": regressor_row(jreg[j])} for i, j in enumerate(LIMB_JOINTS)]
    kps.append({"name": "neck", "weights": regressor_row(jreg[NECK_JOINT])})
    kps += [{"name": n, "vertex": HEAD_VERTICES[n]} for n in NAMES[13:]]
    return kps


def load_keypoints(path):
    with open(path) as fh:
        kps = json.load(fh)
    for kp in kps:
        if "weights" in kp:
            kp["weights"] = {int(v): float(w) for v, w in kp["weights"].items()}
    return kps


def convert(src, keypoints=None, pose_blendshapes=True):
    z = np.load(src, allow_pickle=True)
    verts = np.asarray(z["v_template"], dtype=np.float64)
    n = verts.shape[0]
    shapedirs = np.asarray(z["shapedirs"], dtype=np.float64)
    if shapedirs.shape[:2] != (n, 3) or shapedirs.shape[2] < hmrk.NUM_SHAPE:
        raise ValueError(f"shapedirs must be ({n}, 3, >={hmrk.NUM_SHAPE}), got {shapedirs.shape}")
    jreg = dense(z["J_regressor"])
    parents = [int(p) for p in np.asarray(z["kintree_table"])[0]]
    parents[0] = -1
    posedirs = None
    if pose_blendshapes and "posedirs" in z.files:
        posedirs = np.asarray(z["posedirs"], dtype=np.float64).reshape(3 * n, -1)
    return hmrk.make_body(
        verts,
        np.asarray(z["f"], dtype=np.int32),
        shapedirs[:, :, : hmrk.NUM_SHAPE].reshape(3 * n, hmrk.NUM_SHAPE),
        jreg,
        parents,
        np.asarray(z["weights"], dtype=np.float64),
        keypoints if keypoints is not None else default_keypoints(jreg),
        posedirs,
    )


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src", help="input .npz")
    ap.add_argument("dst", help="output model file")
    ap.add_argument("--keypoints", help="keypoint definition JSON")
    ap.add_argument("--no-pose-blendshapes", action="store_true")
    args = ap.parse_args(argv)
    try:
        kps = load_keypoints(args.keypoints) if args.keypoints else None
        body = convert(args.src, kps, not args.no_pose_blendshapes)
        hmrk.save_model(args.dst, body)
    except (hmrk.HmrkError, ValueError, KeyError, OSError) as e:
        print(f"convert_smpl: {e}", file=sys.stderr)
        return 1
    print(json.dumps({"out": args.dst, "vertices": body.num_vertices, "keypoints": body.num_keypoints}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
