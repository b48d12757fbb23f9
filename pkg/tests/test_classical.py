import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermalab import classical as cl
from thermalab.errors import InputError


@pytest.fixture
def concentrated():
    # two equal subsets, A of measure 0.25 entirely inside the first
    return cl.ClassicalPartition(np.array([0.5, 0.5]), {"A": [0.25, 0.0]})


def test_concentrated_hand_values(concentrated):
    w = cl.state_weights(concentrated, "A")
    assert np.allclose(w, [1.0, 0.0])
    assert cl.classical_time_average(concentrated, "A", w) == pytest.approx(0.5)
    assert concentrated.thermal_value("A") == pytest.approx(0.25)
    var, eth = cl.single_state_determination(concentrated, "A")
    assert var == pytest.approx(0.25) and not eth
    assert list(cl.classical_eigenstate_check(concentrated, "A")) == [False, False]


def test_uniform_and_full_observables():
    part = cl.ClassicalPartition([0.2, 0.3, 0.5], {"U": [0.1, 0.15, 0.25], "all": [0.2, 0.3, 0.5]})
    for name in ("U", "all"):
        assert cl.classical_eigenstate_check(part, name).all()
        var, eth = cl.single_state_determination(part, name)
        assert var == pytest.approx(0.0, abs=1e-15) and eth
        assert cl.equivalence_check(part, name)["consistent"]


def test_identity_on_random_partitions():
    for seed in range(100):
        part, a = cl.random_partition(2 + seed % 7, seed)
        assert cl.variance_identity_residual(part, a) <= 1e-12
        assert cl.equivalence_check(part, a, seed=seed)["consistent"]


def test_proportional_partitions_thermalize():
    part, a = cl.random_partition(5, 3, proportional=True)
    res = cl.equivalence_check(part, a)
    assert res["variance_zero"] and res["eigenstate"] and res["all_states_thermal"]


def test_validation():
    with pytest.raises(InputError):
        cl.ClassicalPartition([0.5, 0.0])
    with pytest.raises(InputError):
        cl.ClassicalPartition([0.5, 0.5], {"A": [0.6, 0.0]})
    with pytest.raises(InputError):
        cl.ClassicalPartition([0.5, 0.5], {"A": [0.1]})
    part = cl.ClassicalPartition([0.5, 0.5], {"Z": [0.0, 0.0]})
    with pytest.raises(InputError):
        cl.single_state_determination(part, "Z")
    with pytest.raises(InputError):
        part.intersections("missing")
    with pytest.raises(InputError):
        cl.ClassicalPartition.from_json({"measures": [1.0], "extra": 1})


def test_json_roundtrip(concentrated):
    back = cl.ClassicalPartition.from_json(concentrated.to_json())
    assert np.array_equal(back.measures, concentrated.measures)
    assert np.array_equal(back.observables["A"], concentrated.observables["A"])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 10.0), st.floats(0.0, 1.0)), min_size=1, max_size=12))
def test_variance_identity_property(cells):
    mu = np.array([c[0] for c in cells])
    frac = np.array([c[1] for c in cells])
    if not np.any(frac > 0):
        frac[0] = 0.5
    part = cl.ClassicalPartition(mu, {"A": mu * frac})
    assert cl.variance_identity_residual(part, "A") <= 1e-12 * max(1.0, mu.sum() / (mu * frac).sum())
