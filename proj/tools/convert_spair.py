#!/usr/bin/env python3
"""Convert SPair-71k style per-image annotations into annotations.json.

Stub: it only rewrites annotations. Feature maps are expected under
<out>/features/<id>.scfm, produced separately from the same images.

Input is a directory tree of per-image JSON files shaped like

    {"filename": "2008_000027.jpg", "category": "aeroplane",
     "image_width": 500, "image_height": 375,
     "bndbox": [x0, y0, x1, y1],
     "kps": {"0": [x, y], "1": null, ...},
     "azimuth_id": 3}

Field names differ between releases; check them against your copy and
adjust FIELD below. Coordinates are scaled from image pixels to a
feature grid of --grid H W cells.
"""

import argparse
import json
import pathlib
import sys

FIELD = {
    "file": "filename",
    "category": "category",
    "width": "image_width",
    "height": "image_height",
    "bbox": "bndbox",
    "keypoints": "kps",
    "bin": "azimuth_id",
}


def convert_one(ann, grid_h, grid_w):
    sx = grid_w / float(ann[FIELD["width"]])
    sy = grid_h / float(ann[FIELD["height"]])

    def to_grid(x, y):
        # clamp onto the grid
        return [min(grid_w - 1.0, x * sx), min(grid_h - 1.0, y * sy)]

    x0, y0, x1, y1 = ann[FIELD["bbox"]]
    kps = {}
    for name, p in ann[FIELD["keypoints"]].items():
        kps[str(name)] = None if p is None else to_grid(p[0], p[1])
    stem = pathlib.Path(ann[FIELD["file"]]).stem
    rec = {
        "id": stem,
        "category": ann[FIELD["category"]],
        "features": "features/%s.scfm" % stem,
        "bbox": [x0 * sx, y0 * sy, x1 * sx, y1 * sy],
        "keypoints": kps,
    }
    if ann.get(FIELD["bin"]) is not None:
        rec["viewpoint_bin"] = int(ann[FIELD["bin"]])
    return rec


def main(argv):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("annotations", type=pathlib.Path, help="directory of per-image JSON files")
    ap.add_argument("--out", type=pathlib.Path, required=True, help="dataset directory")
    ap.add_argument("--grid", type=int, nargs=2, metavar=("H", "W"), required=True)
    ap.add_argument("--bins", type=int, default=8)
    args = ap.parse_args(argv)

    records = []
    for path in sorted(args.annotations.rglob("*.json")):
        with open(path) as f:
            records.append(convert_one(json.load(f), *args.grid))
    if not records:
        sys.exit("no annotation files under %s" % args.annotations)
    cats = sorted({r["category"] for r in records})
    doc = {
        "$schema": "spherecorr/annotations/v1",
        "bins": args.bins,
        "categories": cats,
        "images": records,
        "source": {"converted_from": str(args.annotations)},
    }
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "annotations.json").write_text(json.dumps(doc, indent=1) + "\n")
    missing = [r["features"] for r in records if not (args.out / r["features"]).exists()]
    if missing:
        print("note: %d feature files still missing, e.g. %s" % (len(missing), missing[0]), file=sys.stderr)


if __name__ == "__main__":
    main(sys.argv[1:])
