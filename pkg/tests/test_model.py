from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bnmix import Cpt, Dag, MixtureModel, SampleSet, random_separated_model, separation_certificate
from bnmix.model import (
    GenerationTimeout,
    ModelError,
    PartialAssignment,
    ZeroConditioningProbability,
)

from conftest import brute_conditional, brute_event, brute_joint, chain


def single_vertex_model(p1=0.3):
    g = Dag.build(1, [])
    return MixtureModel(
        dag=g, k=1, weights=np.array([1.0]),
        cpts=((Cpt(vertex=0, parents=(), table=np.array([p1])),),),
    )


def two_chain_model(p_root, p_child_given0, p_child_given1, weights=None, k=1):
    g = chain(2)
    per_source = tuple(
        (
            Cpt(vertex=0, parents=(), table=np.array([p_root[u]])),
            Cpt(vertex=1, parents=(0,), table=np.array([p_child_given0[u], p_child_given1[u]])),
        )
        for u in range(k)
    )
    w = np.full(k, 1.0 / k) if weights is None else np.asarray(weights)
    return MixtureModel(dag=g, k=k, weights=w, cpts=per_source)


class TestCpt:
    def test_wrong_table_size(self):
        with pytest.raises(ModelError):
            Cpt(vertex=0, parents=(1, 2), table=np.array([0.5]))

    def test_entries_clamped_inside_unit_interval(self):
        cpt = Cpt(vertex=0, parents=(), table=np.array([0.0]))
        assert 0 < cpt.table[0] < 1


class TestJoint:
    def test_single_vertex(self):
        m = single_vertex_model(0.3)
        assert m.within_source_joint(0, {0: 1}) == pytest.approx(0.3)

    def test_two_factor_product(self):
        m = two_chain_model([0.5], [0.2], [0.9])
        assert m.within_source_joint(0, {0: 1, 1: 1}) == pytest.approx(0.5 * 0.9)

    def test_partial_assignment_rejected(self):
        m = two_chain_model([0.5], [0.2], [0.9])
        with pytest.raises(PartialAssignment):
            m.within_source_joint(0, {0: 1})

    @given(st.integers(0, 2**20))
    @settings(max_examples=25, deadline=None)
    def test_normalization(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 6))
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.4]
        g = Dag.build(n, pairs)
        m = random_separated_model(g, int(rng.integers(1, 3)), 0.05, seed=seed)
        for u in range(m.k):
            total = sum(
                m.within_source_joint(u, dict(enumerate(bits)))
                for bits in product((0, 1), repeat=n)
            )
            assert total == pytest.approx(1.0, abs=1e-10)


class TestConditional:
    def test_full_assignment_equals_joint(self):
        m = two_chain_model([0.4], [0.3], [0.8])
        a = {0: 1, 1: 0}
        assert m.conditional(0, a, {}) == pytest.approx(m.within_source_joint(0, a))

    def test_chain_reads_cpt_entry(self):
        m = two_chain_model([0.4], [0.3], [0.8])
        assert m.conditional(0, {1: 1}, {0: 1}) == pytest.approx(0.8)

    def test_fan_boundary_ratio_matches_brute_force(self, fan6):
        m = random_separated_model(fan6, 1, 0.0, seed=4)
        mb = dict.fromkeys(fan6.markov_boundary(3), 0)
        mb[4] = 1
        got = m.conditional(0, {3: 1}, mb)
        want = brute_conditional(m, 0, {3: 1}, mb)
        assert got == pytest.approx(want, abs=1e-12)

    def test_overlapping_targets_rejected(self):
        m = two_chain_model([0.4], [0.3], [0.8])
        with pytest.raises(ModelError):
            m.conditional(0, {0: 1}, {0: 0})

    @given(st.integers(0, 2**20))
    @settings(max_examples=20, deadline=None)
    def test_markov_boundary_shields_the_rest(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 7))
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.35]
        g = Dag.build(n, pairs)
        m = random_separated_model(g, 2, 0.05, seed=seed)
        for v in range(n):
            mb = g.markov_boundary(v)
            outside = [w for w in range(n) if w != v and w not in mb]
            if not outside:
                continue
            base_given = {w: int(rng.integers(2)) for w in mb}
            extended = dict(base_given)
            for w in outside:
                extended[w] = int(rng.integers(2))
            try:
                lhs = m.conditional(0, {v: 1}, base_given)
                rhs = m.conditional(0, {v: 1}, extended)
            except ZeroConditioningProbability:
                continue
            assert lhs == pytest.approx(rhs, abs=1e-10)


class TestMixtureConditional:
    def test_k1_equals_source_conditional(self):
        m = two_chain_model([0.4], [0.3], [0.8])
        assert m.mixture_conditional({1: 1}, {0: 0}) == pytest.approx(
            m.conditional(0, {1: 1}, {0: 0})
        )

    def test_identical_sources(self):
        m = two_chain_model([0.4, 0.4], [0.3, 0.3], [0.8, 0.8], k=2)
        assert m.mixture_conditional({1: 1}, {0: 0}) == pytest.approx(0.3)

    def test_two_source_chain_matches_brute_force(self):
        m = two_chain_model([0.3, 0.7], [0.2, 0.6], [0.9, 0.4], weights=[0.25, 0.75], k=2)
        got = m.mixture_conditional({1: 1}, {0: 1})
        num = sum(float(m.weights[u]) * brute_event(m, u, {0: 1, 1: 1}) for u in range(2))
        den = sum(float(m.weights[u]) * brute_event(m, u, {0: 1}) for u in range(2))
        assert got == pytest.approx(num / den, abs=1e-12)

    def test_zero_probability_condition(self):
        # entries are floored at 1e-9, so a conditioning event only reaches
        # probability zero through underflow of a long product
        n = 40
        g = Dag.build(n, [])
        cpts = tuple(
            tuple(Cpt(vertex=v, parents=(), table=np.array([1e-9])) for v in range(n))
            for _ in range(1)
        )
        m = MixtureModel(dag=g, k=1, weights=np.array([1.0]), cpts=cpts)
        with pytest.raises(ZeroConditioningProbability):
            m.conditional(0, {0: 1}, {v: 1 for v in range(1, n)})


class TestSampling:
    def test_empty(self):
        m = single_vertex_model()
        assert len(m.sample(0, seed=1)) == 0

    def test_deterministic_given_seed(self, fig13):
        m = random_separated_model(fig13, 2, 0.1, seed=5)
        a = m.sample(500, seed=9)
        b = m.sample(500, seed=9)
        assert np.array_equal(a.rows, b.rows) and np.array_equal(a.sources, b.sources)

    def test_near_deterministic_cpts(self):
        m = two_chain_model([1.0 - 1e-9], [1e-9], [1.0 - 1e-9])
        rows = m.sample(200, seed=3).rows
        assert rows[:, 0].mean() > 0.95
        assert (rows[:, 1] == rows[:, 0]).mean() > 0.95

    def test_binomial_concentration(self):
        m = two_chain_model([0.37], [0.2], [0.8])
        count = 100_000
        rows = m.sample(count, seed=17).rows
        p = 0.37
        assert abs(rows[:, 0].mean() - p) <= 3 * np.sqrt(p * (1 - p) / count)

    def test_empirical_joint_total_variation(self):
        g = Dag.build(3, [(0, 1), (1, 2)])
        m = random_separated_model(g, 2, 0.2, seed=21)
        count = 200_000
        rows = m.sample(count, seed=4).rows
        idx = rows[:, 0].astype(int) | (rows[:, 1].astype(int) << 1) | (rows[:, 2].astype(int) << 2)
        empirical = np.bincount(idx, minlength=8) / count
        tv = 0.5 * np.abs(empirical - m.mixture_joint_vector()).sum()
        assert tv < 0.01


class TestRandomSeparatedModel:
    def test_k1_any_draw(self):
        m = random_separated_model(chain(3), 1, 0.9, seed=0)
        assert m.k == 1

    def test_zeta_zero_first_draw(self):
        m = random_separated_model(chain(3), 2, 0.0, seed=0)
        assert separation_certificate(m) >= 0.0

    def test_certificate_holds(self):
        m = random_separated_model(chain(4), 2, 0.1, seed=13)
        assert separation_certificate(m) >= 0.1

    def test_weights_floor(self):
        m = random_separated_model(chain(3), 4, 0.05, seed=2)
        assert np.all(m.weights >= 1.0 / 8)
        assert m.weights.sum() == pytest.approx(1.0)

    def test_infeasible_separation_rejected(self):
        with pytest.raises(ModelError):
            random_separated_model(chain(2), 3, 0.6, seed=0)

    def test_generation_timeout(self):
        with pytest.raises(GenerationTimeout):
            random_separated_model(chain(2), 2, 0.88, seed=0, max_tries=25)


class TestSerialization:
    def test_model_round_trip(self, fig13):
        m = random_separated_model(fig13, 2, 0.1, seed=5)
        again = MixtureModel.from_json(m.to_json())
        assert again.k == m.k
        assert np.allclose(again.weights, m.weights)
        for u in range(m.k):
            for v in range(m.dag.n):
                assert np.allclose(again.cpts[u][v].table, m.cpts[u][v].table)

    def test_samples_round_trip_with_labels(self):
        m = two_chain_model([0.4, 0.6], [0.3, 0.7], [0.8, 0.2], k=2)
        s = m.sample(50, seed=2)
        again = SampleSet.from_csv(s.to_csv())
        assert np.array_equal(again.rows, s.rows)
        assert np.array_equal(again.sources, s.sources)

    def test_samples_without_labels(self):
        s = SampleSet(rows=np.array([[0, 1], [1, 0]], dtype=np.uint8))
        again = SampleSet.from_csv(s.to_csv())
        assert again.sources is None
        assert np.array_equal(again.rows, s.rows)

    def test_bad_header_rejected(self):
        with pytest.raises(ModelError):
            SampleSet.from_csv("a,b\n0,1\n")


def test_brute_force_and_vectorized_joint_agree(fan6):
    m = random_separated_model(fan6, 2, 0.1, seed=8)
    for u in range(2):
        vec = m.joint_vector(u)
        for idx in [0, 7, 21, 63]:
            assignment = {v: (idx >> v) & 1 for v in range(6)}
            assert vec[idx] == pytest.approx(brute_joint(m, u, assignment), abs=1e-14)
