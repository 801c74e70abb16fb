from __future__ import annotations

import math

import numpy as np
import pytest

from cqsim.drawer import DrawerOutput
from cqsim.uncertainty import (SELECT_NORMALIZED, decompose, entropy_bits,
                               position_uncertainty, selection_uncertainty,
                               turn_uncertainty, write_uncertainty_rows)


class TestEntropyBits:
    def test_degenerate_is_zero(self):
        assert entropy_bits(np.array([1.0, 0.0, 0.0])) == 0.0

    def test_uniform_three_way(self):
        assert entropy_bits(np.full(3, 1 / 3)) == pytest.approx(math.log2(3.0), abs=1e-12)

    def test_direct_sum_example(self):
        assert entropy_bits(np.array([0.5, 0.25, 0.25])) == pytest.approx(1.5, abs=1e-12)

    def test_permutation_invariant_and_bounded(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            k = int(rng.integers(2, 6))
            d = rng.dirichlet(np.ones(k))
            h = entropy_bits(d)
            assert 0.0 <= h <= math.log2(k) + 1e-12
            assert h == pytest.approx(entropy_bits(d[rng.permutation(k)]), abs=1e-12)

    def test_invalid_distribution_rejected(self):
        with pytest.raises(ValueError):
            entropy_bits(np.array([0.5, 0.6]))


class TestSelectionUncertainty:
    def test_raw_negation(self):
        u = selection_uncertainty({3: 2.0, 7: 0.5}, normalize=False)
        assert u == {3: -2.0, 7: -0.5}
        assert u[7] > u[3]  # lower score, more uncertain

    def test_normalized_endpoints(self):
        u = selection_uncertainty({3: 2.0, 7: 0.5}, normalize=True)
        assert u[3] == 0.0 and u[7] == 1.0

    def test_single_clipart_is_half(self):
        assert selection_uncertainty({5: 1.7}, normalize=True) == {5: 0.5}

    def test_ordering_reverses_scores_in_both_modes(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            scores = {i: float(s) for i, s in enumerate(rng.normal(size=5))}
            by_score = sorted(scores, key=scores.get)
            for mode in (False, True):
                u = selection_uncertainty(scores, normalize=mode)
                assert sorted(u, key=u.get, reverse=True) == by_score


class TestPositionUncertainty:
    def test_identical_members_zero(self):
        assert position_uncertainty(np.array([[0.3, 0.4]] * 5)) == 0.0

    def test_hand_population_variance(self):
        pts = np.array([[0.2, 0.5], [0.4, 0.5]])
        assert position_uncertainty(pts) == pytest.approx(0.01, abs=1e-12)

    def test_member_order_invariant(self):
        rng = np.random.default_rng(2)
        pts = rng.random((5, 2))
        a = position_uncertainty(pts)
        b = position_uncertainty(pts[::-1])
        assert a == pytest.approx(b, abs=1e-15)


class TestDecomposition:
    def test_identical_members(self):
        d = decompose(np.array([[0.5, 0.5], [0.5, 0.5]]))
        assert d.model == pytest.approx(0.0, abs=1e-12)
        assert d.total == pytest.approx(d.data, abs=1e-12)

    def test_disagreeing_members(self):
        d = decompose(np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert d.total == pytest.approx(1.0, abs=1e-12)
        assert d.data == pytest.approx(0.0, abs=1e-12)
        assert d.model == pytest.approx(1.0, abs=1e-12)

    def test_model_term_nonnegative_randomized(self):
        rng = np.random.default_rng(3)
        for _ in range(10000):
            members = rng.dirichlet(np.ones(3), size=int(rng.integers(2, 6)))
            d = decompose(members)
            assert d.model >= -1e-9
            assert d.total == pytest.approx(d.data + d.model, abs=1e-9)

    def test_total_equals_entropy_of_mean(self):
        rng = np.random.default_rng(4)
        members = rng.dirichlet(np.ones(4), size=5)
        d = decompose(members)
        assert d.total == pytest.approx(entropy_bits(members.mean(axis=0)), abs=1e-12)


def _output(scores, size_dists=None, flip_dists=None, pos=None):
    g = len(scores)
    return DrawerOutput(
        scores=np.asarray(scores, dtype=np.float64),
        size_dist=np.asarray(size_dists if size_dists is not None else np.full((g, 3), 1 / 3)),
        flip_dist=np.asarray(flip_dists if flip_dists is not None else np.full((g, 2), 0.5)),
        pos=np.asarray(pos if pos is not None else np.full((g, 2), 0.5)),
    )


class TestTurnUncertainty:
    def test_single_selected_clipart_sets_maxima(self):
        out = _output([1.0, -1.0, -2.0])
        tu = turn_uncertainty(out)
        assert [c.clipart for c in tu.per_clipart] == [0]
        assert tu.h_size_max == tu.per_clipart[0].h_size
        assert tu.u_select_max == -1.0

    def test_max_over_size_entropies(self):
        size_dists = np.array([
            [0.97, 0.02, 0.01],   # low entropy
            [0.4, 0.35, 0.25],    # high entropy
            [1.0, 0.0, 0.0],
        ])
        out = _output([2.0, 1.0, -1.0], size_dists=size_dists)
        tu = turn_uncertainty(out)
        assert tu.h_size_max == pytest.approx(entropy_bits(size_dists[1]), abs=1e-12)

    def test_unselected_clipart_never_contributes(self):
        size_dists = np.array([[1.0, 0.0, 0.0], [1 / 3, 1 / 3, 1 / 3]])
        out = _output([1.0, 0.0], size_dists=size_dists)  # score 0 is not selected
        tu = turn_uncertainty(out)
        assert [c.clipart for c in tu.per_clipart] == [0]
        assert tu.h_size_max == pytest.approx(0.0, abs=1e-12)

    def test_empty_when_nothing_selected(self):
        tu = turn_uncertainty(_output([-1.0, -2.0]))
        assert tu.empty
        assert tu.h_size_max is None

    def test_position_requires_ensemble(self):
        out = _output([1.0])
        with pytest.raises(ValueError, match="ensemble"):
            turn_uncertainty(out, ensemble_outputs=None, want_position=True)

    def test_position_from_ensemble_outputs(self):
        out = _output([1.0])
        members = [_output([1.0], pos=[[0.2, 0.5]]), _output([1.0], pos=[[0.4, 0.5]])]
        tu = turn_uncertainty(out, ensemble_outputs=members, want_position=True)
        assert tu.u_position_max == pytest.approx(0.01, abs=1e-12)

    def test_maxima_monotone_under_added_clipart(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            dists = rng.dirichlet(np.ones(3), size=3)
            small = _output([1.0, 1.0, -1.0], size_dists=dists)
            grown = _output([1.0, 1.0, 1.0], size_dists=dists)
            a = turn_uncertainty(small)
            b = turn_uncertainty(grown)
            assert b.h_size_max >= a.h_size_max - 1e-12

    def test_normalized_mode_uses_minmax(self):
        out = _output([2.0, 0.5])
        tu = turn_uncertainty(out, select_mode=SELECT_NORMALIZED)
        values = {c.clipart: c.u_select for c in tu.per_clipart}
        assert values == {0: 0.0, 1: 1.0}


def test_uncertainty_csv_shape():
    rows = [{"dialogue_id": "d1", "turn_index": 0, "u_select": -1.0,
             "h_size": 0.5, "h_flip": 0.1, "u_position": None}]
    text = write_uncertainty_rows(rows)
    lines = text.strip().splitlines()
    assert lines[0] == "dialogue_id,turn_index,u_select,h_size,h_flip,u_position"
    assert lines[1].startswith("d1,0,")
