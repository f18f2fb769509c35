import numpy as np
import pytest

from isoclass import _backend, experiments
from isoclass._validation import trial_rng
from isoclass.experiments import ExperimentConfig, simulate

CASES = {
    "coker": dict(p=2, n=4, E=3, E_cap=24),
    "coker_exhaustive": dict(p=2, n=2, E0=2, E=3, E_cap=24),
    "stratum": dict(p=2, n=3, r=1, E=4, E_cap=32),
    "rst": dict(p=2, n=3, r=0, E=4, E_cap=32),
    "moment": dict(p=2, n=3, q=4, m=1, E=4),
    "igusa": dict(p=3, n=2, s=1, E=3, E_cap=24),
    "pairing_match": dict(p=2, n=4, e_list=(0, 1), E=4),
    "global_sha": dict(r=1, prime_set=(2, 3), E=3, E_cap=24),
    "kernel_dim": dict(p=3, n=5, E=1),
    "uniformity": dict(p=2, n=2, E=2),
}


def as_ints(a):
    return [int(x) for x in np.asarray(a).ravel()]


@pytest.mark.parametrize("kind", sorted(CASES))
def test_wide_backend_reproduces_compiled_runs(kind, monkeypatch):
    config = ExperimentConfig(kind=kind, trials=150, master_seed=21, **CASES[kind])
    compiled = simulate(config)
    monkeypatch.setattr(experiments._backend, "fast_limit", lambda p: 0)
    wide = simulate(config)
    assert wide.counts == compiled.counts
    assert wide.unresolved_count == compiled.unresolved_count


def test_primitives_agree():
    fast, wide = _backend.compiled(), _backend.wide()
    for t in range(10):
        a = fast.alt_haar(trial_rng(1, t), 5, 3, 4)
        b = wide.alt_haar(trial_rng(1, t), 5, 3, 4)
        assert as_ints(a) == as_ints(b)
        a = fast.mod_p_intersections(trial_rng(2, t), 4, 3, 3)
        b = wide.mod_p_intersections(trial_rng(2, t), 4, 3, 3)
        assert as_ints(a) == as_ints(b)
        a = fast.coker_trial(trial_rng(3, t), 4, 2, 6, 24)
        b = wide.coker_trial(trial_rng(3, t), 4, 2, 6, 24)
        assert as_ints(a[0]) == as_ints(b[0]) and int(a[1]) == int(b[1])


def test_wide_handles_precision_beyond_int64():
    wide = _backend.wide()
    A = wide.alt_haar(trial_rng(4, 0), 3, 2, 70)
    assert A.dtype == object
    assert max(int(x) for x in A.ravel()) >= 2**40
