import random

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from ptamper.instances import random_objective, random_process
from ptamper.process import ExplicitProcess, fhat_table, make_objective

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def uniform2():
    return ExplicitProcess.bernoulli_iid(2, 0.5)


@pytest.fixture
def AND():
    return make_objective("and")


@st.composite
def instances(draw, max_n=4, boolean=None, min_mu=0.0):
    """A random explicit process with a random [0,1] objective."""
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(1, max_n))
    is_bool = draw(st.booleans()) if boolean is None else boolean
    rng = random.Random(seed)
    proc = random_process(rng, n)
    f = random_objective(rng, proc, is_bool)
    if min_mu > 0.0:
        from hypothesis import assume

        assume(fhat_table(proc, f)[()] > min_mu)
    return proc, f
