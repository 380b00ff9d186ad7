"""The compiled loop must reproduce the reference kernel field for field."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ilpfspn.experiments import run_simulation
from ilpfspn.pipeline import SimConfig

engine_configs = st.builds(
    SimConfig,
    W=st.sampled_from([1, 2, 3, 4, 8]),
    V=st.sampled_from([50.0, 333.0, 2000.0, 5000.0]),
    lambda_i=st.floats(min_value=0.0, max_value=4.0),
    mu_i=st.floats(min_value=0.0, max_value=4.0),
    p_bmis=st.sampled_from([0.0, 0.1, 0.5, 1.0]),
    p_vmis=st.sampled_from([0.0, 0.3, 1.0]),
    C_BR=st.integers(min_value=1, max_value=5),
    buffer_capacity=st.sampled_from([None, 1.0, 1.5, 3.0, 7.0]),
    pass_through=st.booleans(),
    defer_reexecution=st.booleans(),
    seed=st.integers(min_value=0, max_value=2**64 - 1),
)


@settings(max_examples=80, deadline=None, derandomize=True, database=None)
@given(engine_configs)
def test_fused_engine_matches_reference(config):
    assert run_simulation(config, engine="fused") == run_simulation(config, engine="reference")


@settings(max_examples=15, deadline=None, derandomize=True, database=None)
@given(engine_configs)
def test_tick_coalescing_is_invisible(config):
    slow = run_simulation(config, engine="reference", coalesce=False)
    fast = run_simulation(config, engine="reference")
    assert (slow.cycles, slow.mispredictions, slow.reexecutions, slow.rejected_jumps) == (
        fast.cycles, fast.mispredictions, fast.reexecutions, fast.rejected_jumps
    )
    assert slow.ipc == fast.ipc


def test_engine_choice_validated():
    with pytest.raises(ValueError):
        run_simulation(SimConfig(V=10.0), engine="gpu")
    with pytest.raises(ValueError):
        run_simulation(SimConfig(V=10.0), engine="fused", observer=lambda *a: None)


def test_same_seed_same_result_and_different_seed_differs():
    cfg = SimConfig(W=4, V=1e5, lambda_i=0.8, mu_i=1.0, p_bmis=0.1, p_vmis=1.0, seed=11)
    assert run_simulation(cfg) == run_simulation(cfg)
    assert run_simulation(cfg) != run_simulation(cfg.replace(seed=12))
