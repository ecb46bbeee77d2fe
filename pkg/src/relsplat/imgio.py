"""PNG (8-bit, linearly mapped) and PFM (little-endian float map) I/O."""

import numpy as np
from PIL import Image


def save_png(path, img):
    """Float image in [0,1] -> 8-bit PNG; grayscale or RGB."""
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path)


def load_png(path):
    """8-bit PNG -> float64 in [0,1]; shape (H,W) or (H,W,3)."""
    img = Image.open(path)
    arr = np.asarray(img)
    if arr.ndim == 3 and arr.shape[2] == 4:
        arr = arr[:, :, :3]
    return arr.astype(np.float64) / 255.0


def save_pfm(path, img):
    """Write a PFM ('Pf' grayscale or 'PF' color), little-endian, bottom-up rows."""
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim == 2:
        header = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        header = b"PF"
    else:
        raise ValueError("PFM supports (H,W) or (H,W,3) arrays")
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")  # negative scale = little-endian
        f.write(arr[::-1].astype("<f4").tobytes())


def load_pfm(path):
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise ValueError(f"not a PFM file: header {header!r}")
        w, h = (int(v) for v in f.readline().split())
        scale = float(f.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(w * h * channels * 4), dtype=dtype)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return data.reshape(shape)[::-1].astype(np.float64)
