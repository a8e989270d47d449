"""PNG round-tripping between files/bytes and float arrays in [0,1].

8-bit RGB throughout; channel values map linearly (v = u8 / 255,
u8 = round(v * 255)) so a save/load round trip is exact at 8-bit precision.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ImageDecodeError


def array_to_u8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def u8_to_array(u8: np.ndarray) -> np.ndarray:
    return u8.astype(np.float64) / 255.0


def encode_png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(array_to_u8(img), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as im:
            return u8_to_array(np.asarray(im.convert("RGB")))
    except ImageDecodeError:
        raise
    except Exception as exc:
        raise ImageDecodeError(f"cannot decode image bytes: {exc}") from exc


def save_png(img: np.ndarray, path) -> None:
    Path(path).write_bytes(encode_png(img))


def load_image(path) -> np.ndarray:
    """Load any PIL-decodable image file as an (H, W, 3) float array."""
    try:
        with Image.open(path) as im:
            return u8_to_array(np.asarray(im.convert("RGB")))
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ImageDecodeError(f"cannot decode image {path}: {exc}") from exc


def resize_letterbox(img: np.ndarray, width_px: int, height_px: int) -> np.ndarray:
    """Bilinear resize preserving aspect ratio; mismatch letterboxed with white."""
    h, w = img.shape[:2]
    if (h, w) == (height_px, width_px):
        return np.asarray(img, dtype=np.float64).copy()
    scale = min(width_px / w, height_px / h)
    new_w = max(1, int(round(w * scale)))
    new_h = max(1, int(round(h * scale)))
    pil = Image.fromarray(array_to_u8(img), mode="RGB").resize((new_w, new_h), Image.BILINEAR)
    out = np.ones((height_px, width_px, 3), dtype=np.float64)
    y0 = (height_px - new_h) // 2
    x0 = (width_px - new_w) // 2
    out[y0:y0 + new_h, x0:x0 + new_w] = u8_to_array(np.asarray(pil))
    return out
