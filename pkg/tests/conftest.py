from __future__ import annotations

import io

import pytest
from PIL import Image

from t2ibias.inference import ImageRef


def make_png(width: int = 64, height: int = 64, color=(120, 80, 40)) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", (width, height), color).save(buf, format="PNG")
    return buf.getvalue()


@pytest.fixture
def png_bytes() -> bytes:
    return make_png()


@pytest.fixture
def image_ref(png_bytes) -> ImageRef:
    return ImageRef("img1", png_bytes)
