"""Negative sampler tests: validity, distributions, hardness ordering."""

import numpy as np
import pytest

from driftrec.models import EmbeddingModel, init_xavier
from driftrec.samplers import KINDS, NegativeSampler, SamplerSpec, sample_negative
from conftest import make_log


def forced_log():
    """One user, 3 items, train covers items 0 and 1: only 2 is negative."""
    return make_log([("a", "x", 1), ("a", "y", 2), ("b", "z", 3)])


class TestSamplerSpec:
    def test_defaults(self):
        spec = SamplerSpec()
        assert (spec.kind, spec.alpha, spec.pool, spec.m, spec.n) == ("rns", 0.75, 10, 2, 10)

    def test_validation(self):
        with pytest.raises(ValueError, match="kind"):
            SamplerSpec(kind="hard")
        with pytest.raises(ValueError, match="pool"):
            SamplerSpec(pool=0)
        with pytest.raises(ValueError, match="1 <= m <= n"):
            SamplerSpec(m=5, n=3)
        with pytest.raises(ValueError, match="1 <= m <= n"):
            SamplerSpec(m=0)
        with pytest.raises(ValueError, match="alpha"):
            SamplerSpec(alpha=-0.5)


class TestForcedOutcome:
    @pytest.mark.parametrize("kind", KINDS)
    def test_only_one_valid_item(self, kind):
        log = forced_log()
        model = init_xavier(log.num_users, log.num_items, 4, seed=0)
        sampler = NegativeSampler(SamplerSpec(kind=kind, pool=3, m=1, n=2), log)
        rng = np.random.default_rng(7)
        for _ in range(25):
            assert sampler.sample(0, 0, model, rng) == 2

    def test_sample_equals_batch_of_one(self):
        log = forced_log()
        model = init_xavier(log.num_users, log.num_items, 4, seed=0)
        sampler = NegativeSampler(SamplerSpec(), log)
        a = sampler.sample(0, 0, model, np.random.default_rng(5))
        b = sampler.sample_batch(np.array([0]), model, np.random.default_rng(5))
        assert a == int(b[0])

    def test_module_level_wrapper(self):
        log = forced_log()
        model = init_xavier(log.num_users, log.num_items, 4, seed=0)
        sampler = NegativeSampler(SamplerSpec(), log)
        assert sample_negative(sampler, 0, 0, model, np.random.default_rng(1)) == 2


class TestValidity:
    @pytest.mark.parametrize("kind", KINDS)
    def test_never_returns_train_item(self, kind):
        rng = np.random.default_rng(50)
        rows = [
            (f"u{rng.integers(8)}", f"i{rng.integers(25)}", int(rng.integers(1000)))
            for _ in range(150)
        ]
        log = make_log(rows)
        model = init_xavier(log.num_users, log.num_items, 6, seed=1)
        sampler = NegativeSampler(SamplerSpec(kind=kind, pool=4, m=2, n=5), log)
        train_sets = {
            int(u): set(sampler.user_items(int(u)).tolist()) for u in np.unique(log.users)
        }
        users = log.users[rng.permutation(len(log))][:80]
        negs = sampler.sample_batch(users, model, rng)
        for u, neg in zip(users.tolist(), negs.tolist()):
            assert 0 <= neg < log.num_items
            assert neg not in train_sets[u]

    def test_dense_user_fallback(self):
        """A user holding all but one item still gets the single valid negative."""
        rows = [("a", f"i{j}", j) for j in range(49)] + [("b", "i49", 99)]
        log = make_log(rows)
        model = init_xavier(log.num_users, log.num_items, 4, seed=2)
        for kind in KINDS:
            sampler = NegativeSampler(SamplerSpec(kind=kind), log)
            rng = np.random.default_rng(3)
            assert sampler.sample(0, 0, model, rng) == 49

    def test_infeasible_user_raises(self):
        log = make_log([("a", "x", 1)])  # user 0 interacted with every item
        model = init_xavier(1, 1, 4, seed=0)
        sampler = NegativeSampler(SamplerSpec(), log)
        with pytest.raises(ValueError, match="no negative exists"):
            sampler.sample(0, 0, model, np.random.default_rng(0))

    def test_determinism(self):
        log = forced_log()
        rows = [(f"u{j % 4}", f"i{j % 11}", j) for j in range(30)]
        log = make_log(rows)
        model = init_xavier(log.num_users, log.num_items, 4, seed=4)
        for kind in KINDS:
            sampler = NegativeSampler(SamplerSpec(kind=kind, pool=3, n=4, m=1), log)
            users = log.users[:20]
            a = sampler.sample_batch(users, model, np.random.default_rng(17))
            b = sampler.sample_batch(users, model, np.random.default_rng(17))
            assert np.array_equal(a, b)


class TestUniformDistribution:
    def test_rns_chi_square(self):
        """4 valid candidates; each should get ~1/4 of 1e6 draws (3 sigma)."""
        log = make_log([("a", "x", 1)] + [(f"pad{j}", f"n{j}", j + 2) for j in range(4)])
        # user 0 interacted with item 0 only; items 1..4 are valid
        model = init_xavier(log.num_users, log.num_items, 4, seed=0)
        sampler = NegativeSampler(SamplerSpec(kind="rns"), log)
        rng = np.random.default_rng(600)
        draws = 10**6
        negs = sampler.sample_batch(np.zeros(draws, dtype=np.int64), model, rng)
        counts = np.bincount(negs, minlength=5)[1:]
        assert counts.sum() == draws
        p = 0.25
        sigma = np.sqrt(draws * p * (1 - p))
        for c in counts:
            assert abs(c - draws * p) <= 3 * sigma


class TestPopularity:
    def make_popularity_log(self):
        # item degrees: i0 -> 4 users, i1 -> 2, i2 -> 1; user "z" trains
        # only on i3 so i0..i2 are all valid negatives for them
        rows = (
            [(f"a{j}", "i0", j) for j in range(4)]
            + [(f"b{j}", "i1", 10 + j) for j in range(2)]
            + [("c0", "i2", 20)]
            + [("z", "i3", 30)]
        )
        return make_log(rows)

    def test_frequencies_proportional_to_degree_alpha(self):
        log = self.make_popularity_log()
        model = init_xavier(log.num_users, log.num_items, 4, seed=0)
        alpha = 0.75
        sampler = NegativeSampler(SamplerSpec(kind="pns", alpha=alpha), log)
        z = log.user_vocab["z"]
        rng = np.random.default_rng(41)
        draws = 200_000
        negs = sampler.sample_batch(np.full(draws, z, dtype=np.int64), model, rng)
        counts = np.bincount(negs, minlength=log.num_items).astype(float)
        deg = np.array([4.0, 2.0, 1.0])
        want = deg**alpha / np.sum(deg**alpha)
        got = counts[:3] / draws
        assert counts[3] == 0
        for w, g in zip(want, got):
            sigma = np.sqrt(w * (1 - w) / draws)
            assert abs(g - w) <= 4 * sigma

    def test_alpha_zero_is_uniform(self):
        log = self.make_popularity_log()
        model = init_xavier(log.num_users, log.num_items, 4, seed=0)
        sampler = NegativeSampler(SamplerSpec(kind="pns", alpha=0.0), log)
        z = log.user_vocab["z"]
        rng = np.random.default_rng(42)
        draws = 120_000
        negs = sampler.sample_batch(np.full(draws, z, dtype=np.int64), model, rng)
        counts = np.bincount(negs, minlength=log.num_items).astype(float)
        p = 1 / 3
        sigma = np.sqrt(draws * p * (1 - p))
        for c in counts[:3]:
            assert abs(c - draws * p) <= 4 * sigma


class TestDynamic:
    def hardness_setup(self, seed=0):
        """User 0 trains on item 0; items 1..9 valid with controlled scores."""
        rows = [("a", "i0", 1)] + [(f"pad{j}", f"i{j}", j + 2) for j in range(1, 10)]
        log = make_log(rows)
        ue = np.zeros((log.num_users, 2))
        ue[0] = [1.0, 0.0]
        ie = np.zeros((log.num_items, 2))
        ie[:, 0] = np.arange(log.num_items, dtype=float)  # score(0, j) == j
        model = EmbeddingModel(ue, ie)
        return log, model

    def test_dns_picks_argmax_of_pool(self):
        log, model = self.hardness_setup()
        sampler = NegativeSampler(SamplerSpec(kind="dns", pool=9), log)
        rng = np.random.default_rng(11)
        # pool of 9 distinct-ish draws almost surely includes item 9
        negs = sampler.sample_batch(np.zeros(400, dtype=np.int64), model, rng)
        # every draw returns the max-scoring candidate of its pool
        assert negs.max() == 9
        assert np.mean(negs >= 8) > 0.8

    def test_dns_tie_prefers_smallest_index(self):
        rows = [("a", "i0", 1)] + [(f"pad{j}", f"i{j}", j + 2) for j in range(1, 6)]
        log = make_log(rows)
        model = EmbeddingModel(np.ones((log.num_users, 2)), np.zeros((log.num_items, 2)))
        # all scores equal -> smallest candidate index wins; a pool of 100
        # over 5 valid items misses item 1 with probability (4/5)^100
        sampler = NegativeSampler(SamplerSpec(kind="dns", pool=100), log)
        rng = np.random.default_rng(12)
        negs = [sampler.sample(0, 0, model, rng) for _ in range(60)]
        assert set(negs) == {1}

    def test_dns_dominates_rns_in_score(self):
        log, model = self.hardness_setup()
        rng = np.random.default_rng(13)
        draws = 10_000
        users = np.zeros(draws, dtype=np.int64)
        rns = NegativeSampler(SamplerSpec(kind="rns"), log)
        dns = NegativeSampler(SamplerSpec(kind="dns", pool=5), log)
        s_rns = model.pair_scores(users, rns.sample_batch(users, model, rng))
        s_dns = model.pair_scores(users, dns.sample_batch(users, model, rng))
        assert s_dns.mean() > s_rns.mean() + 1.0

    def test_dns_mn_window_softer_than_dns(self):
        """The M..N window lowers mean hardness vs pure dns over the same N."""
        log, model = self.hardness_setup()
        sampler = NegativeSampler(SamplerSpec(kind="dns_mn", m=2, n=4), log)
        rng = np.random.default_rng(14)
        draws = 4000
        negs = sampler.sample_batch(np.zeros(draws, dtype=np.int64), model, rng)
        dns = NegativeSampler(SamplerSpec(kind="dns", pool=4), log)
        s_mn = model.pair_scores(np.zeros(draws, dtype=np.int64), negs).mean()
        s_dns = model.pair_scores(
            np.zeros(draws, dtype=np.int64),
            dns.sample_batch(np.zeros(draws, dtype=np.int64), model, rng),
        ).mean()
        assert s_mn < s_dns

    def test_dns_mn_m_equals_n_picks_softest(self):
        """M = N degenerates to the softest candidate; mean below uniform."""
        log, model = self.hardness_setup()
        rng = np.random.default_rng(15)
        draws = 6000
        users = np.zeros(draws, dtype=np.int64)
        soft = NegativeSampler(SamplerSpec(kind="dns_mn", m=3, n=3), log)
        rns = NegativeSampler(SamplerSpec(kind="rns"), log)
        s_soft = model.pair_scores(users, soft.sample_batch(users, model, rng)).mean()
        s_rns = model.pair_scores(users, rns.sample_batch(users, model, rng)).mean()
        assert s_soft < s_rns - 0.5

    def test_dns_mn_exact_marginal_oracle(self):
        """Selected-item distribution vs brute-force enumeration of the process.

        9 valid items with distinct scores, N=3 iid uniform candidates, one
        of ranks M..N chosen uniformly: the marginal over items follows by
        enumerating all 9^3 pools x 3 ranks (each equally likely).
        """
        log, model = self.hardness_setup()
        m, n = 1, 3
        valid = list(range(1, 10))  # item j scores j for user 0
        weight = {j: 0.0 for j in valid}
        for c1 in valid:
            for c2 in valid:
                for c3 in valid:
                    ordered = sorted((c1, c2, c3), key=lambda j: (-j, j))
                    for r in range(m - 1, n):
                        weight[ordered[r]] += 1.0
        total = sum(weight.values())
        expected = {j: w / total for j, w in weight.items()}

        sampler = NegativeSampler(SamplerSpec(kind="dns_mn", m=m, n=n), log)
        rng = np.random.default_rng(16)
        draws = 120_000
        negs = sampler.sample_batch(np.zeros(draws, dtype=np.int64), model, rng)
        counts = np.bincount(negs, minlength=10)
        for j in valid:
            p = expected[j]
            sigma = np.sqrt(p * (1 - p) / draws)
            assert abs(counts[j] / draws - p) <= 4.5 * sigma, f"item {j}"
