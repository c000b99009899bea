import numpy as np
import pytest

from woit.core import Fragment, Spectrum3


def make_stream(rng, n, coverage_only=False, max_alpha=1.0):
    """Random fragment stream with well-behaved materials."""
    out = []
    for _ in range(n):
        trans = Spectrum3.gray(0.0) if coverage_only else Spectrum3.from_array(rng.uniform(0.0, 1.0, 3))
        out.append(Fragment(
            depth=float(rng.uniform(0.1, 10.0)),
            alpha=float(rng.uniform(0.0, max_alpha)),
            transmission=trans,
            radiance=Spectrum3.from_array(rng.uniform(0.0, 1.0, 3)),
        ))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
