import numpy as np
import pytest

from blockvi.space import BlockShape, SpacePoint


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_point(rng, shape: BlockShape, scale: float = 1.0) -> SpacePoint:
    return SpacePoint(scale * rng.standard_normal(shape.total), shape)


def adjoint_defect(op, rng, n_pairs=500):
    """max |<Lx, y> - <x, L*y>| - 1e-10 (1 + ||x|| ||y||) over random pairs."""
    worst = -np.inf
    for _ in range(n_pairs):
        x = random_point(rng, op.input_shape)
        y = random_point(rng, op.output_shape)
        lhs = op.apply(x).inner(y)
        rhs = x.inner(op.adjoint(y))
        worst = max(worst, abs(lhs - rhs) - 1e-10 * (1.0 + x.norm() * y.norm()))
    return worst
