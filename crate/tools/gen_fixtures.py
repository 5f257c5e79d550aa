#!/usr/bin/env python3
"""Regenerates the JSON fixtures under fixtures/.

Expected values are computed here with numpy/scipy, independently of the
Rust code. Run from the repository root: python3 tools/gen_fixtures.py
"""

import json
import math
import os

import numpy as np
from scipy.spatial.transform import Rotation as R

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "fixtures")
rng = np.random.default_rng(20240607)


def wxyz(rot):
    x, y, z, w = rot.as_quat()
    q = [w, x, y, z]
    if q[0] < 0:
        q = [-c for c in q]
    return [float(c) for c in q]


def from_euler(az, el, roll):
    # R = R_y(-az) · R_x(el) · R_z(roll)
    return R.from_euler("YXZ", [-az, el, roll])


def write_json(path, obj):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=1)
        f.write("\n")


def rotation_vectors():
    out = []
    for _ in range(100):
        az = rng.uniform(-math.pi, math.pi)
        el = rng.uniform(-1.4, 1.4)
        roll = rng.uniform(-math.pi, math.pi)
        a = from_euler(az, el, roll)
        b = R.random(random_state=int(rng.integers(1 << 31)))
        v = rng.normal(size=3)
        out.append(
            {
                "a": wxyz(a),
                "b": wxyz(b),
                "compose": wxyz(a * b),
                "vector": [float(c) for c in v],
                "a_rotated": [float(c) for c in a.apply(v)],
                "a_euler": {"azimuth": az, "elevation": el, "roll": roll},
            }
        )
    write_json(os.path.join(ROOT, "rotation_vectors.json"), out)


def corners(center, size, rot):
    h = np.asarray(size) / 2.0
    pts = []
    for i in range(8):
        s = np.array([1.0 if i & 1 else -1.0, 1.0 if i & 2 else -1.0, 1.0 if i & 4 else -1.0])
        pts.append(np.asarray(center) + rot.apply(s * h))
    return pts


def footprint(cam, center, size, rot):
    vis = []
    for p in corners(center, size, rot):
        if p[2] > 0:
            vis.append((cam["fx"] * p[0] / p[2] + cam["cx"], cam["fy"] * p[1] / p[2] + cam["cy"]))
    if not vis:
        return None, False
    partial = len(vis) < 8
    xs, ys = [v[0] for v in vis], [v[1] for v in vis]
    x0, y0 = max(min(xs), 0.0), max(min(ys), 0.0)
    x1, y1 = min(max(xs), float(cam["width"])), min(max(ys), float(cam["height"]))
    if x1 < x0 or y1 < y0:
        return None, partial
    return [x0, y0, x1, y1], partial


def iou(a, b):
    if not (a[2] > a[0] and a[3] > a[1]) or not (b[2] > b[0] and b[3] > b[1]):
        return 0.0
    iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def circ(a, b):
    d = abs((a % 360.0) - (b % 360.0))
    return min(d, 360.0 - d)


def eval_cases():
    cam = {"fx": 256.0, "fy": 256.0, "cx": 128.0, "cy": 128.0, "width": 256, "height": 256}
    lines, ious, errs = [], [], []
    labels = ["chair", "car", "dog", "sofa"]
    for case in range(20):
        n = int(rng.integers(1, 5))
        objs, dets, ests = [], [], []
        for j in range(n):
            az = float(rng.uniform(-math.pi, math.pi))
            el = float(rng.uniform(-0.5, 0.5))
            roll = float(rng.uniform(-0.3, 0.3))
            rot = from_euler(az, el, roll)
            if case == 3 and j == 0:
                center = [0.2, 0.0, 0.4]  # straddles the camera plane
            else:
                center = [float(rng.uniform(-1.5, 1.5)), float(rng.uniform(-1.0, 1.0)), float(rng.uniform(4.0, 9.0))]
            size = [float(c) for c in rng.uniform(0.4, 1.6, size=3)]
            objs.append({"label": labels[j % 4], "center": center, "size": size, "rotation": {"quat": wxyz(rot)}})
            fp, partial = footprint(cam, center, size, rot)
            true_az = math.degrees(az)
            if case == 0 and j == 0:
                # wraparound: target 350°, estimate 10°
                az = math.radians(-10.0)
                rot = from_euler(az, el, roll)
                objs[-1]["rotation"] = {"quat": wxyz(rot)}
                fp, partial = footprint(cam, center, size, rot)
                true_az = -10.0
                est = 10.0
            else:
                est = true_az + float(rng.normal(0, 25.0))
            if fp is None or rng.uniform() < 0.1:
                det = None
            else:
                w, h = fp[2] - fp[0], fp[3] - fp[1]
                jit = rng.normal(0, 0.12, size=4) * [w, h, w, h]
                det = [fp[0] + jit[0], fp[1] + jit[1], fp[2] + jit[2], fp[3] + jit[3]]
                det = [float(c) for c in det]
            dets.append(det)
            ests.append(est)
            ious.append(iou(fp, det) if (fp is not None and det is not None and not partial) else 0.0)
            errs.append(circ(true_az, est))
        scene = {"camera": cam, "objects": objs, "prompt": f"case {case}"}
        lines.append(json.dumps({"id": f"case-{case:02d}", "scene": scene, "detections": dets, "azimuths": ests}))
    n = len(ious)
    expected = {
        "n": n,
        "acc_ls": sum(1 for x in ious if x > 0.6) / n,
        "miou": sum(ious) / n,
        "abs_err": sum(errs) / n,
        "acc_22_5": sum(1 for e in errs if e <= 22.5) / n,
    }
    os.makedirs(ROOT, exist_ok=True)
    with open(os.path.join(ROOT, "eval_cases.jsonl"), "w") as f:
        f.write("\n".join(lines) + "\n")
    write_json(os.path.join(ROOT, "eval_expected.json"), expected)


def parity_scenes():
    sizes = [(64, 64), (96, 64), (64, 80), (128, 96), (48, 48)]
    for k in range(10):
        w, h = sizes[k % len(sizes)]
        cam = {"fx": float(w), "fy": float(w), "cx": w / 2.0, "cy": h / 2.0, "width": w, "height": h}
        n = 0 if k == 0 else int(rng.integers(1, 6))
        objs = []
        for j in range(n):
            rot = R.random(random_state=int(rng.integers(1 << 31)))
            objs.append(
                {
                    "label": ["chair", "lamp", "cat", "table", "bike"][j],
                    "center": [float(rng.uniform(-1.2, 1.2)), float(rng.uniform(-1.0, 1.0)), float(rng.uniform(4.0, 8.0))],
                    "size": [float(c) for c in rng.uniform(0.4, 1.4, size=3)],
                    "rotation": {"quat": wxyz(rot)},
                }
            )
        scene = {"camera": cam, "objects": objs, "prompt": f"parity scene {k}"}
        write_json(os.path.join(ROOT, "scenes", f"parity_{k:02d}.json"), scene)
    cube = {
        "camera": {"fx": 64.0, "fy": 64.0, "cx": 32.0, "cy": 32.0, "width": 64, "height": 64},
        "objects": [{"label": "cube", "center": [0.0, 0.0, 3.0], "size": [1.0, 1.0, 1.0], "rotation": {"quat": wxyz(from_euler(0.5, 0.3, 0.1))}}],
        "prompt": "a cube",
    }
    write_json(os.path.join(ROOT, "scenes", "single_cube.json"), cube)


def annotate_recovery():
    lines, boxes = [], []
    for i in range(12):
        az, el, roll = rng.uniform(-math.pi, math.pi), rng.uniform(-1.2, 1.2), rng.uniform(-math.pi, math.pi)
        rot = from_euler(az, el, roll)
        center = [float(rng.uniform(-2, 2)), float(rng.uniform(-1, 1)), float(rng.uniform(3, 9))]
        size = [float(c) for c in rng.uniform(0.2, 2.0, size=3)]
        cs = corners(center, size, rot)
        # Ten copies of each corner survive 10% trimming; interior points never matter.
        pts = [list(map(float, c)) for _ in range(10) for c in cs]
        for _ in range(10):
            local = rng.uniform(-0.4, 0.4, size=3) * np.asarray(size)
            pts.append([float(c) for c in np.asarray(center) + rot.apply(local)])
        label = ["chair", "car", "horse"][i % 3]
        lines.append(json.dumps({"label": label, "area": 0.3, "confidence": 0.9, "orientation": {"quat": wxyz(rot)}, "points": pts}))
        boxes.append({"label": label, "center": center, "size": size, "rotation": {"quat": wxyz(rot)}})
    # Rejected candidates, one per reason.
    dummy = [[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [0.0, 0.0, 2.0]]
    for label, area, conf in [("chair", 0.05, 0.9), ("chair", 0.8, 0.9), ("chair", 0.3, 0.79), ("bottle", 0.3, 0.95)]:
        lines.append(json.dumps({"label": label, "area": area, "confidence": conf, "orientation": {"quat": [1.0, 0.0, 0.0, 0.0]}, "points": dummy}))
    with open(os.path.join(ROOT, "annotate_candidates.jsonl"), "w") as f:
        f.write("\n".join(lines) + "\n")
    write_json(
        os.path.join(ROOT, "annotate_expected.json"),
        {"boxes": boxes, "rejections": [{"id": 12, "reason": "TOO_SMALL"}, {"id": 13, "reason": "TOO_LARGE"}, {"id": 14, "reason": "LOW_CONFIDENCE"}, {"id": 15, "reason": "AMBIGUOUS_CATEGORY"}]},
    )


if __name__ == "__main__":
    rotation_vectors()
    eval_cases()
    parity_scenes()
    annotate_recovery()
