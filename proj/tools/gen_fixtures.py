#!/usr/bin/env python3
"""Writes the replay fixtures under fixtures/env1/.

Each file holds the trial records of one condition against one detector.
Success counts are chosen per (condition, prompt group, detector) and the
records are then populated with detections that realise exactly those counts
at confidence thresholds 0.5 and 0.8 under the location-gated success rule.

Run from the repository root:  python3 tools/gen_fixtures.py
"""

import json
import random
import struct
import zlib
from pathlib import Path

DETECTORS = ["yolov5", "rtdetr", "yolov10"]
TARGET = "stop sign"
SCENE_W, SCENE_H = 900, 900

# (successes at 0.5, successes at 0.8, trials) per detector.
COUNTS = {
    "magic": {
        "": {"yolov5": (44, 28, 50), "rtdetr": (40, 37, 50), "yolov10": (37, 23, 50)},
    },
    "ndda_rand": {
        "shape": {"yolov5": (23, 6, 100), "rtdetr": (23, 9, 100), "yolov10": (10, 3, 100)},
        "color": {"yolov5": (15, 7, 100), "rtdetr": (48, 25, 100), "yolov10": (6, 5, 100)},
        "text": {"yolov5": (46, 30, 100), "rtdetr": (168, 112, 300), "yolov10": (30, 20, 100)},
        "pattern": {"yolov5": (47, 25, 100), "rtdetr": (56, 34, 100), "yolov10": (32, 25, 100)},
        "all": {"yolov5": (26, 8, 300), "rtdetr": (28, 14, 300), "yolov10": (14, 9, 300)},
    },
    "ndda_dagent": {
        "text": {"yolov5": (144, 76, 300), "rtdetr": (51, 32, 100), "yolov10": (33, 20, 100)},
        "pattern": {"yolov5": (141, 70, 300), "rtdetr": (57, 30, 100), "yolov10": (108, 76, 300)},
    },
    # Ablation rows are only published at threshold 0.5; the 0.8 counts are
    # synthetic and only need to respect monotonicity.
    "ablation:gagent_naive": {
        "": {"yolov5": (4, 1, 100), "rtdetr": (6, 2, 100), "yolov10": (0, 0, 100)},
    },
    "ablation:gagent_naive_dagent": {
        "": {"yolov5": (7, 3, 100), "rtdetr": (9, 4, 100), "yolov10": (0, 0, 100)},
    },
    "ablation:gagent_naive_eagent_ae": {
        "": {"yolov5": (46, 24, 100), "rtdetr": (56, 33, 100), "yolov10": (33, 17, 100)},
    },
}

OTHER_LABELS = ["person", "car", "traffic light", "bench", "potted plant"]


def plan_for(rng):
    """A valid paint plan on the centre cell of the 3x3 mock grid."""
    scale = round(rng.uniform(0.08, 0.2), 3)
    ax = round(rng.uniform(0.45, 0.55), 3)
    ay = round(rng.uniform(0.45, 0.55), 3)
    w = scale * SCENE_W
    cx, cy = ax * SCENE_W, ay * SCENE_H
    import math

    x0 = math.ceil(cx - w / 2 - 0.5)
    x1 = math.ceil(cx + w / 2 - 0.5)
    y0 = math.ceil(cy - w / 2 - 0.5)
    y1 = math.ceil(cy + w / 2 - 0.5)
    return {
        "method": "paint",
        "region_index": 5,
        "anchor": [ax, ay],
        "scale": scale,
        "rotation_deg": 0.0,
        "bbox_px": [x0, y0, x1 - x0, y1 - y0],
        "rationale": "forward-facing wall at eye level",
    }


def near(rng, box):
    x, y, w, h = box
    dx, dy = rng.randint(-3, 3), rng.randint(-3, 3)
    return [max(0, x + dx), max(0, y + dy), w + rng.randint(-4, 4), h + rng.randint(-4, 4)]


def far(box):
    x, y, w, h = box
    # Top-left corner of the scene, never overlapping the centre cell.
    return [10, 10, min(w, 200), min(h, 200)]


def detections_for(rng, kind, box):
    dets = []
    if kind == "strong":
        dets.append({"label": TARGET, "confidence": round(rng.uniform(0.8, 0.99), 4), "bbox": near(rng, box)})
    elif kind == "weak":
        dets.append({"label": TARGET, "confidence": round(rng.uniform(0.5, 0.7999), 4), "bbox": near(rng, box)})
    elif kind == "low":
        dets.append({"label": TARGET, "confidence": round(rng.uniform(0.05, 0.4999), 4), "bbox": near(rng, box)})
    elif kind == "misplaced":
        dets.append({"label": TARGET, "confidence": round(rng.uniform(0.6, 0.99), 4), "bbox": far(box)})
    elif kind == "other":
        dets.append({"label": rng.choice(OTHER_LABELS), "confidence": round(rng.uniform(0.5, 0.99), 4),
                     "bbox": near(rng, box)})
    # kind == "none": empty
    if rng.random() < 0.3:
        dets.append({"label": rng.choice(OTHER_LABELS), "confidence": round(rng.uniform(0.1, 0.9), 4),
                     "bbox": [600, 650, 120, 200]})
    dets.sort(key=lambda d: -d["confidence"])
    return dets


def records(rng, condition, group, detector, strong_weak_trials):
    s05, s08, n = strong_weak_trials
    assert 0 <= s08 <= s05 <= n
    kinds = ["strong"] * s08 + ["weak"] * (s05 - s08)
    fails = ["none", "low", "misplaced", "other"]
    kinds += [fails[i % len(fails)] for i in range(n - s05)]
    rng.shuffle(kinds)
    out = []
    for i, kind in enumerate(kinds, start=1):
        plan = plan_for(rng)
        tag = condition.replace(":", "-")
        gid = f"{group}-" if group else ""
        out.append({
            "trial_id": f"env1-{tag}-{gid}{detector}-{i:03d}",
            "condition": condition,
            "prompt_group": group,
            "detector_id": detector,
            "detections": detections_for(rng, kind, plan["bbox_px"]),
            "plan": plan,
            "patch_ref": f"patches/{tag}/{gid}{(i - 1) % 50 + 1:03d}.png",
        })
    return out


def write_scene(path, w=160, h=120, seed=7):
    """Small textured RGB scene for command-line smoke runs."""
    rng = random.Random(seed)
    rows = bytearray()
    for y in range(h):
        rows.append(0)
        for x in range(w):
            n = rng.randrange(24)
            rows += bytes([60 + x * 97 // w + n, 70 + y * 89 // h + n, 90 + (x + y) * 41 // (w + h)])

    def chunk(kind, data):
        body = kind + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body))

    png = b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0))
    png += chunk(b"IDAT", zlib.compress(bytes(rows), 9)) + chunk(b"IEND", b"")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(png)


def main():
    rng = random.Random(20240917)
    root = Path(__file__).resolve().parent.parent / "fixtures" / "env1"
    root.mkdir(parents=True, exist_ok=True)
    for condition, groups in COUNTS.items():
        for detector in DETECTORS:
            lines = []
            for group, per_detector in groups.items():
                lines += records(rng, condition, group, detector, per_detector[detector])
            name = f"{condition.replace(':', '_')}_{detector}.jsonl"
            with open(root / name, "w") as f:
                for rec in lines:
                    f.write(json.dumps(rec, sort_keys=True) + "\n")
            print(f"{name}: {len(lines)} records")
    write_scene(root.parent / "scenes" / "street.png")


if __name__ == "__main__":
    main()
