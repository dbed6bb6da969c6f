"""
Image file access for insect-mie
Decodes JPEG/PNG into ColorFrames and encodes frames back to disk.
"""

from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from PIL import Image

from insect_mie.core import ColorFrame

IMAGE_SUFFIXES = ('.jpg', '.jpeg', '.png')

OUTPUT_FORMATS = {
    'png': ('PNG', '.png'),
    'jpeg': ('JPEG', '.jpg'),
}


def is_image_file(path: Union[str, Path]) -> bool:
    return Path(path).suffix.lower() in IMAGE_SUFFIXES


def read_color_frame(path: Union[str, Path], size: Optional[Tuple[int, int]] = None) -> ColorFrame:
    """Decode an image file to 8-bit RGB, resampled to size (width, height) if given"""
    with Image.open(path) as image:
        image = image.convert('RGB')
        if size is not None and image.size != tuple(size):
            image = image.resize(tuple(size), Image.Resampling.BILINEAR)
        rgb = np.asarray(image, dtype=np.uint8)
    return ColorFrame(rgb)


def read_image_size(path: Union[str, Path]) -> Tuple[int, int]:
    """(width, height) without decoding pixel data"""
    with Image.open(path) as image:
        return image.size


def write_color_frame(path: Union[str, Path], frame: ColorFrame, fmt: str = 'png', quality: int = 95,
                      compress_level: int = 6) -> Path:
    """Encode a frame; PNG is lossless, JPEG honours the quality setting"""
    if fmt not in OUTPUT_FORMATS:
        raise ValueError(f"unsupported output format {fmt!r}")
    pil_format, _ = OUTPUT_FORMATS[fmt]
    path = Path(path)
    image = Image.fromarray(np.ascontiguousarray(frame.rgb))
    if pil_format == 'JPEG':
        image.save(path, format=pil_format, quality=quality)
    else:
        image.save(path, format=pil_format, compress_level=compress_level)
    return path


def output_name(stem: str, fmt: str) -> str:
    return f"{stem}{OUTPUT_FORMATS[fmt][1]}"
