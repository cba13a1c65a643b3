import os
from pathlib import Path

import numpy as np
import pytest

MNIST_DIR = Path(os.environ.get("ICSPLIT_MNIST_DIR", "/root/data/mnist"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def mnist_available() -> bool:
    return (MNIST_DIR / "train-images.idx3-ubyte").exists() and \
        (MNIST_DIR / "t10k-images.idx3-ubyte").exists()


def toy_images(n, seed=0, size=8, minority=0.1):
    """Blurry squares with a minority of crosses, NHWC float64 in [0, 1]."""
    r = np.random.default_rng(seed)
    square = np.zeros((size, size))
    square[2:size - 2, 2:size - 2] = 1.0
    cross = np.zeros((size, size))
    cross[size // 2 - 1:size // 2 + 1, :] = 1.0
    cross[:, size // 2 - 1:size // 2 + 1] = 1.0
    is_cross = r.random(n) < minority
    base = np.where(is_cross[:, None, None], cross, square)
    imgs = np.clip(0.8 * base + 0.1 + r.normal(0, 0.05, (n, size, size)), 0, 1)
    return imgs[..., None], is_cross


# -- acceptance report -------------------------------------------------------------

CRITERIA_LINES: list[str] = []


def record_criterion(number: int, title: str, passed: bool, detail: str, seconds: float):
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail} ({seconds:.1f} s)"
    CRITERIA_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)
