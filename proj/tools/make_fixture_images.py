"""Regenerate the grayscale fixture images under tests/data/images.

Sources are the sample images bundled with scikit-image. Each one is
converted to gray, center-cropped to a square and resized with
anti-aliasing, then quantized to 8 bits and written as binary PGM.
"""

from pathlib import Path

import numpy as np
import skimage.data
from PIL import Image
from skimage.color import rgb2gray
from skimage.transform import resize

TRAIN = ["camera", "coins", "moon", "clock", "page", "brick", "grass", "chelsea"]
TEST = ["astronaut", "coffee", "rocket", "text"]


def gray_square(name: str, size: int) -> np.ndarray:
    img = getattr(skimage.data, name)()
    if img.ndim == 3:
        img = rgb2gray(img[..., :3])
    else:
        img = img.astype(np.float64) / 255.0
    h, w = img.shape
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    img = img[top : top + side, left : left + side]
    img = resize(img, (size, size), anti_aliasing=True, order=3)
    return np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)


def main() -> None:
    root = Path(__file__).resolve().parent.parent / "tests" / "data" / "images"
    for subdir, names, size in (("train", TRAIN, 96), ("test", TEST, 64)):
        out = root / subdir
        out.mkdir(parents=True, exist_ok=True)
        for name in names:
            Image.fromarray(gray_square(name, size), mode="L").save(out / f"{name}.pgm")


if __name__ == "__main__":
    main()
