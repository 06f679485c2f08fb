import numpy as np
import pytest

from ltmap.lattice import LatticeGeometry
from ltmap.transport import make_triangular_map


def make_identity_map(geom: LatticeGeometry, ordering_name="lexicographic",
                      neighborhood_order=1, hidden=(4,), quad_q=7, seed=0, **kw):
    """Map that is exactly the identity: zero f heads and Softplus(g) = 1.

    Hidden layers keep random weights, but both final layers are zero, so
    phi = z and logdet = 0 regardless of the hidden activations.
    """
    return make_triangular_map(
        geom, ordering_name=ordering_name, neighborhood_order=neighborhood_order,
        hidden=hidden, quad_q=quad_q, rng=np.random.default_rng(seed),
        g_final_scale=0.0, **kw)


def make_small_map(geom: LatticeGeometry, ordering_name="checkerboard",
                   neighborhood_order=1, hidden=(8, 8), quad_q=7, seed=0,
                   randomize=0.0, **kw):
    """Small random map for structural tests; `randomize` perturbs every
    parameter so no gradient path sits at an exact zero."""
    tmap = make_triangular_map(
        geom, ordering_name=ordering_name, neighborhood_order=neighborhood_order,
        hidden=hidden, quad_q=quad_q, rng=np.random.default_rng(seed), **kw)
    if randomize:
        from ltmap.transport import map_get_params, map_set_params
        rng = np.random.default_rng(seed + 1)
        vec = map_get_params(tmap)
        map_set_params(tmap, vec + randomize * rng.standard_normal(vec.size))
    return tmap


@pytest.fixture
def rng():
    return np.random.default_rng(42)
