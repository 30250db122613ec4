import numpy as np
import pytest

from orbitpool.orbits import ImageRGB

PAD = (124, 117, 104)


def smooth_sine_image(size: int = 96) -> ImageRGB:
    """Deterministic low-frequency test image; gentle gradients keep
    interpolation error well under one intensity level per resampling."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    ch0 = 128 + 90 * np.sin(2 * np.pi * xx / 61) * np.cos(2 * np.pi * yy / 67)
    ch1 = 128 + 80 * np.cos(2 * np.pi * (xx + yy) / 83)
    ch2 = 128 + 70 * np.sin(2 * np.pi * (xx - yy) / 71)
    stacked = np.stack([ch0, ch1, ch2], axis=-1)
    return ImageRGB(np.clip(np.rint(stacked), 0, 255).astype(np.uint8))


@pytest.fixture
def sine_image() -> ImageRGB:
    return smooth_sine_image(96)


@pytest.fixture
def sine_image_small() -> ImageRGB:
    return smooth_sine_image(48)
