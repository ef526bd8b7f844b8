"""Image loading, resolution, and small pixel utilities shared by the tools."""

from __future__ import annotations

import base64
import hashlib
import io
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
from PIL import Image


class ImageIntegrityError(Exception):
    """Raised when a locator's content hash does not match the manifest."""


def load_image(path: str | Path) -> np.ndarray:
    """Read an image file as an (H, W, 3) uint8 RGB array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_png(img: np.ndarray, path: str | Path) -> None:
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(path, format="PNG")


def to_luma(img: np.ndarray) -> np.ndarray:
    """Rec.601 luma in [0, 1] as float64."""
    arr = np.asarray(img, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        return arr
    return 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]


def gray_to_rgb(gray01: np.ndarray) -> np.ndarray:
    """Map a [0, 1] float grid to a uint8 RGB image (for attachments)."""
    g = np.clip(np.asarray(gray01, dtype=np.float64), 0.0, 1.0)
    u = (g * 255.0 + 0.5).astype(np.uint8)
    return np.stack([u, u, u], axis=-1)


def resize(img: np.ndarray, width: int, height: int) -> np.ndarray:
    pil = Image.fromarray(np.asarray(img, dtype=np.uint8))
    return np.asarray(pil.resize((width, height), Image.BILINEAR), dtype=np.uint8)


def resize_max_edge(img: np.ndarray, max_edge: int) -> np.ndarray:
    h, w = img.shape[:2]
    scale = max_edge / max(h, w)
    if scale >= 1.0:
        return img
    return resize(img, max(1, int(round(w * scale))), max(1, int(round(h * scale))))


def clip_bbox(bbox, width: int, height: int) -> tuple[int, int, int, int]:
    """Clamp an (x0, y0, x1, y1) pixel box (end-exclusive) to image bounds."""
    x0, y0, x1, y1 = (int(round(v)) for v in bbox)
    x0 = max(0, min(x0, width - 1))
    y0 = max(0, min(y0, height - 1))
    x1 = max(x0 + 1, min(x1, width))
    y1 = max(y0 + 1, min(y1, height))
    return x0, y0, x1, y1


def crop(img: np.ndarray, bbox) -> np.ndarray:
    h, w = img.shape[:2]
    x0, y0, x1, y1 = clip_bbox(bbox, w, h)
    return img[y0:y1, x0:x1]


def compose_horizontal(images, sep: int = 4, sep_value: int = 255) -> np.ndarray:
    """Join images left-to-right at a common height with a plain separator."""
    images = [np.asarray(im, dtype=np.uint8) for im in images]
    target_h = max(im.shape[0] for im in images)
    scaled = []
    for im in images:
        h, w = im.shape[:2]
        if h != target_h:
            im = resize(im, max(1, int(round(w * target_h / h))), target_h)
        scaled.append(im)
    total_w = sum(im.shape[1] for im in scaled) + sep * (len(scaled) - 1)
    out = np.full((target_h, total_w, 3), sep_value, dtype=np.uint8)
    x = 0
    for im in scaled:
        out[:, x : x + im.shape[1]] = im
        x += im.shape[1] + sep
    return out


def encode_png_base64(img: np.ndarray, max_edge: Optional[int] = None) -> str:
    """PNG-encode an array as a base64 string for wire transport."""
    if max_edge is not None:
        img = resize_max_edge(img, max_edge)
    buf = io.BytesIO()
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def file_digest(path: str | Path, algorithm: str = "sha256") -> str:
    h = hashlib.new(algorithm)
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def array_digest(img: np.ndarray) -> str:
    """Stable short digest of pixel content, used in trace records."""
    arr = np.ascontiguousarray(img)
    h = hashlib.sha256()
    h.update(str(arr.shape).encode())
    h.update(str(arr.dtype).encode())
    h.update(arr.tobytes())
    return h.hexdigest()[:16]


class ImageResolver:
    """Resolve manifest locators to pixel arrays.

    Locators are paths relative to ``root`` (absolute paths pass through).
    When the manifest declares content hashes, each load is verified against
    them with the manifest's declared algorithm.
    """

    def __init__(
        self,
        root: str | Path,
        hashes: Optional[Mapping[str, str]] = None,
        algorithm: str = "sha256",
        cache: bool = True,
    ):
        self.root = Path(root)
        self.hashes = dict(hashes) if hashes else {}
        self.algorithm = algorithm
        self._cache: Optional[dict[str, np.ndarray]] = {} if cache else None

    def path_for(self, locator: str) -> Path:
        p = Path(locator)
        return p if p.is_absolute() else self.root / p

    def load(self, locator: str) -> np.ndarray:
        if self._cache is not None and locator in self._cache:
            return self._cache[locator]
        path = self.path_for(locator)
        declared = self.hashes.get(locator)
        if declared is not None:
            actual = file_digest(path, self.algorithm)
            if actual != declared:
                raise ImageIntegrityError(
                    f"content hash mismatch for {locator}: "
                    f"declared {declared}, found {actual}"
                )
        img = load_image(path)
        if self._cache is not None:
            self._cache[locator] = img
        return img
