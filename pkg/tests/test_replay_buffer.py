import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from knowsr.env_mpe import Transition
from knowsr.errors import InsufficientDataError, ParameterError
from knowsr.replay_buffer import ReplayBuffer, ordered_chunks, stack


def _tr(k: float) -> Transition:
    return Transition(np.full((2, 3), k), np.full((2, 5), k), np.array([k, -k]), np.full((2, 3), k + 0.5),
                      k % 2 == 0)


def test_push_and_fifo_eviction():
    buf = ReplayBuffer(2)
    buf.push(_tr(1))
    assert len(buf) == 1
    buf.push(_tr(2))
    buf.push(_tr(3))
    assert len(buf) == 2
    assert [t.rewards[0] for t in buf.items()] == [2.0, 3.0]


@given(st.integers(1, 7), st.integers(0, 30))
def test_capacity_and_oldest_first(cap, n):
    buf = ReplayBuffer(cap)
    for k in range(n):
        buf.push(_tr(k))
    assert len(buf) == min(n, cap)
    assert [t.rewards[0] for t in buf.items()] == list(range(max(0, n - cap), n))


def test_storage_fidelity():
    t = _tr(0.1234567890123)
    buf = ReplayBuffer(4)
    buf.push(t)
    (got,) = buf.sample(1, 0)
    assert got is t


def test_sample_errors():
    buf = ReplayBuffer(4)
    buf.push(_tr(1))
    with pytest.raises(InsufficientDataError):
        buf.sample(2, 0)
    with pytest.raises(ParameterError):
        buf.sample(0, 0)
    with pytest.raises(ParameterError):
        ReplayBuffer(0)


def test_sample_determinism_and_no_duplicates():
    buf = ReplayBuffer(100)
    for k in range(50):
        buf.push(_tr(k))
    a = [t.rewards[0] for t in buf.sample(30, 5)]
    b = [t.rewards[0] for t in buf.sample(30, 5)]
    assert a == b and len(set(a)) == 30


def test_single_draw_is_uniform():
    buf = ReplayBuffer(10)
    for k in range(10):
        buf.push(_tr(k))
    rng = np.random.default_rng(2024)
    trials = 100_000
    counts = np.bincount([int(buf.sample(1, rng)[0].rewards[0]) for _ in range(trials)], minlength=10)
    sigma = np.sqrt(trials * 0.1 * 0.9)
    assert np.all(np.abs(counts - trials * 0.1) < 3 * sigma)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_chunks():
    assert [len(c) for c in ordered_chunks(list(range(10)), 4)] == [4, 4, 2]
    assert ordered_chunks(list(range(5)), 9) == [list(range(5))]
    with pytest.raises(ParameterError):
        ordered_chunks([1], 0)


@given(st.lists(st.integers()), st.integers(1, 12))
def test_chunks_partition(batch, k):
    chunks = ordered_chunks(batch, k)
    assert [x for c in chunks for x in c] == batch
    assert all(len(c) == k for c in chunks[:-1])


def test_stack_shapes():
    b = stack([_tr(1), _tr(2), _tr(3)])
    assert b.obs.shape == (3, 2, 3) and b.actions.shape == (3, 2, 5) and b.rewards.shape == (3, 2)
    np.testing.assert_array_equal(b.done, [0.0, 1.0, 0.0])
    assert stack(b) is b
