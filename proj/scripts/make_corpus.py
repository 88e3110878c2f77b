#!/usr/bin/env python3
"""Build the desk-scale grayscale corpus under tests/data/corpus/.

Sources are photographs that ship inside locally installed Python packages
(scikit-image, scikit-learn, matplotlib). Images are converted to 8-bit
grayscale and capped at MAX_DIM on the long side so the training and codec
tests stay fast on a small machine. Output is binary PGM (P5).

Usage: python3 scripts/make_corpus.py [--out tests/data/corpus]
"""

import argparse
import os

from PIL import Image

MAX_DIM = 384

# name -> (package, relative path)
SOURCES = {
    "astronaut": ("skimage", "data/astronaut.png"),
    "camera": ("skimage", "data/camera.png"),
    "coffee": ("skimage", "data/coffee.png"),
    "chelsea": ("skimage", "data/chelsea.png"),
    "rocket": ("skimage", "data/rocket.jpg"),
    "motorcycle_left": ("skimage", "data/motorcycle_left.png"),
    "grass": ("skimage", "data/grass.png"),
    "gravel": ("skimage", "data/gravel.png"),
    "ihc": ("skimage", "data/ihc.png"),
    "china": ("sklearn", "datasets/images/china.jpg"),
    # refinement split
    "moon": ("skimage", "data/moon.png"),
    "flower": ("sklearn", "datasets/images/flower.jpg"),
    "coins": ("skimage", "data/coins.png"),
    "clock_motion": ("skimage", "data/clock_motion.png"),
    # held-out split
    "motorcycle_right": ("skimage", "data/motorcycle_right.png"),
    "grace_hopper": ("matplotlib", "mpl-data/sample_data/grace_hopper.jpg"),
    "page": ("skimage", "data/page.png"),
}

SPLITS = {
    "train": ["astronaut", "camera", "coffee", "chelsea", "rocket",
              "motorcycle_left", "grass", "gravel", "ihc", "china"],
    "refine": ["moon", "flower", "coins", "clock_motion"],
    "eval": ["motorcycle_right", "grace_hopper", "page"],
}


def package_dir(pkg):
    mod = __import__(pkg)
    return os.path.dirname(mod.__file__)


def write_pgm(path, img):
    w, h = img.size
    data = img.tobytes()
    assert len(data) == w * h
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(data)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="tests/data/corpus")
    args = ap.parse_args()

    for split, names in SPLITS.items():
        outdir = os.path.join(args.out, split)
        os.makedirs(outdir, exist_ok=True)
        for name in names:
            pkg, rel = SOURCES[name]
            src = os.path.join(package_dir(pkg), rel)
            img = Image.open(src)
            if img.mode != "L":
                img = img.convert("L")
            if max(img.size) > MAX_DIM:
                scale = MAX_DIM / max(img.size)
                img = img.resize((max(1, round(img.size[0] * scale)),
                                  max(1, round(img.size[1] * scale))),
                                 Image.LANCZOS)
            dst = os.path.join(outdir, name + ".pgm")
            write_pgm(dst, img)
            print("%-8s %-18s %dx%d" % (split, name, img.size[0], img.size[1]))


if __name__ == "__main__":
    main()
