"""Pool bookkeeping, budget accounting, and full-loop behavior."""

import numpy as np
import pytest

from adval.attacks import AttackConfig
from adval.data import SyntheticSpec, gen_blobs
from adval.errors import ConfigError, PoolInvariantError
from adval.loop import (
    ActiveConfig,
    PoolState,
    apply_query,
    init_pools,
    run_active_learning,
    sample_candidates,
)
from adval.nn import Dense, Dropout, NetworkSpec, ReLU, TrainConfig
from adval.strategies import (
    ADVERSARIAL_TWIN,
    CEAL_PSEUDO,
    QueryBatch,
    SyntheticAddition,
)


def blob_pair(classes=3, points=80, seed=0, cov=0.5):
    train = gen_blobs(SyntheticSpec(classes, points, cov_scale=cov, seed=seed))
    test = gen_blobs(SyntheticSpec(classes, points // 2, cov_scale=cov, seed=seed + 1))
    return train, test


def small_net_spec(classes=3, dim=2, seed=0):
    layers = (Dense(dim, 16), ReLU(), Dropout(0.25), Dense(16, classes))
    return NetworkSpec((dim,), layers, classes, init_seed=seed)


def quick_config(strategy, classes=3, **kw):
    defaults = dict(
        network=small_net_spec(classes),
        strategy=strategy,
        candidates=30,
        n_query=5,
        budget=30,
        initial_labeled=classes * 2,
        base_steps=40,
        seed=1,
    )
    defaults.update(kw)
    return ActiveConfig(**defaults)


class TestInitPools:
    def test_one_per_class_when_budget_equals_classes(self):
        ds, _ = blob_pair(classes=4, points=30)
        pools = init_pools(ds, 4, seed=0)
        labels = [l for _, l in pools.labeled]
        assert sorted(labels) == [0, 1, 2, 3]

    def test_equal_counts_with_remainder(self):
        ds, _ = blob_pair(classes=3, points=30)
        pools = init_pools(ds, 11, seed=0)
        counts = np.bincount([l for _, l in pools.labeled], minlength=3)
        assert counts.min() >= 3 and counts.sum() == 11

    def test_zero_requested_rejected(self):
        ds, _ = blob_pair()
        with pytest.raises(ConfigError):
            init_pools(ds, 0, seed=0)

    def test_deterministic(self):
        ds, _ = blob_pair()
        assert init_pools(ds, 7, seed=5) == init_pools(ds, 7, seed=5)

    def test_partition_is_clean(self):
        ds, _ = blob_pair()
        pools = init_pools(ds, 9, seed=2)
        pools.check_conservation(len(ds))
        assert len(pools.labeled) + len(pools.unlabeled) == len(ds)

    def test_labels_match_ground_truth(self):
        ds, _ = blob_pair()
        pools = init_pools(ds, 9, seed=3)
        for i, label in pools.labeled:
            assert label == ds.labels[i]


class TestSampleCandidates:
    def test_exhausts_small_pool(self):
        ds, _ = blob_pair()
        pools = init_pools(ds, 6, seed=0)
        got = sample_candidates(pools, 10**6, round_seed=1)
        assert sorted(got) == sorted(pools.unlabeled)

    def test_subset_and_distinct(self):
        ds, _ = blob_pair()
        pools = init_pools(ds, 6, seed=0)
        got = sample_candidates(pools, 25, round_seed=2)
        assert len(got) == 25 and len(set(got)) == 25
        assert set(got) <= set(pools.unlabeled)

    def test_fresh_each_round(self):
        ds, _ = blob_pair()
        pools = init_pools(ds, 6, seed=0)
        a = sample_candidates(pools, 20, round_seed=1)
        b = sample_candidates(pools, 20, round_seed=2)
        assert not np.array_equal(a, b)

    def test_roughly_uniform_membership(self):
        ds, _ = blob_pair(points=20)  # 60 points
        pools = init_pools(ds, 6, seed=0)
        hits = {i: 0 for i in pools.unlabeled}
        rounds = 2000
        for r in range(rounds):
            for i in sample_candidates(pools, 5, round_seed=r):
                hits[int(i)] += 1
        rate = 5 / len(pools.unlabeled)
        sigma = np.sqrt(rounds * rate * (1 - rate))
        for count in hits.values():
            assert abs(count - rounds * rate) <= 4 * sigma


class TestApplyQuery:
    def oracle_for(self, ds):
        return lambda i: int(ds.labels[i])

    def test_set_algebra(self):
        ds, _ = blob_pair()
        state = PoolState(
            labeled=((0, int(ds.labels[0])), (1, int(ds.labels[1]))),
            unlabeled=(2, 3, 4),
            synthetic=(),
        )
        batch = QueryBatch(queried=(2, 3), synthetic_additions=(), annotations_charged=2)
        new, ledger = apply_query(state, batch, self.oracle_for(ds))
        assert new.labeled_indices() == (0, 1, 2, 3)
        assert new.unlabeled == (4,)
        assert ledger.annotations_used == 4
        assert ledger.training_set_size == 4

    def test_twin_batch_double_counts_training_items(self, blobs3):
        ds = blobs3
        pools = init_pools(ds, 6, seed=0)
        queried = tuple(pools.unlabeled[:10])
        additions = tuple(
            SyntheticAddition(ds.inputs[i] + 0.01, ADVERSARIAL_TWIN, None, i)
            for i in queried
        )
        batch = QueryBatch(queried, additions, 10)
        new, ledger = apply_query(pools, batch, self.oracle_for(ds))
        assert ledger.annotations_used == 16
        assert ledger.training_set_size == 26  # 16 real + 10 twins
        for add in new.synthetic:
            assert add.label == ds.labels[add.source_index]

    def test_ceal_batch_charges_queries_only(self, blobs3):
        ds = blobs3
        pools = init_pools(ds, 6, seed=0)
        queried = tuple(pools.unlabeled[:5])
        pseudo_src = pools.unlabeled[6]
        additions = (
            SyntheticAddition(ds.inputs[pseudo_src], CEAL_PSEUDO, 0, pseudo_src),
            SyntheticAddition(ds.inputs[pools.unlabeled[7]], CEAL_PSEUDO, 1, pools.unlabeled[7]),
            SyntheticAddition(ds.inputs[pools.unlabeled[8]], CEAL_PSEUDO, 2, pools.unlabeled[8]),
        )
        batch = QueryBatch(queried, additions, 5)
        new, ledger = apply_query(pools, batch, self.oracle_for(ds))
        assert ledger.annotations_used == 11  # 6 initial + 5 queried
        assert ledger.pseudo_additions == 3
        assert len(new.unlabeled) == len(pools.unlabeled) - 5  # pseudo sources stay

    def test_ceal_pseudo_set_replaced_not_accumulated(self, blobs3):
        ds = blobs3
        pools = init_pools(ds, 6, seed=0)
        oracle = self.oracle_for(ds)
        u = pools.unlabeled
        first = QueryBatch(
            (u[0],),
            (SyntheticAddition(ds.inputs[u[1]], CEAL_PSEUDO, 0, u[1]),),
            1,
        )
        pools, _ = apply_query(pools, first, oracle)
        second = QueryBatch(
            (u[2],),
            (
                SyntheticAddition(ds.inputs[u[3]], CEAL_PSEUDO, 1, u[3]),
                SyntheticAddition(ds.inputs[u[4]], CEAL_PSEUDO, 1, u[4]),
            ),
            1,
        )
        pools, ledger = apply_query(pools, second, oracle)
        assert ledger.pseudo_additions == 2  # first round's pseudo item dropped
        assert {s.source_index for s in pools.synthetic} == {u[3], u[4]}

    def test_twins_survive_pseudo_replacement(self, blobs3):
        ds = blobs3
        pools = init_pools(ds, 6, seed=0)
        oracle = self.oracle_for(ds)
        u = pools.unlabeled
        first = QueryBatch(
            (u[0],), (SyntheticAddition(ds.inputs[u[0]], ADVERSARIAL_TWIN, None, u[0]),), 1
        )
        pools, _ = apply_query(pools, first, oracle)
        second = QueryBatch((u[1],), (), 1)
        pools, ledger = apply_query(pools, second, oracle)
        assert len(pools.synthetic) == 1
        assert ledger.training_set_size == 6 + 2 + 1

    def test_corruption_counted_not_prevented(self, blobs3):
        ds = blobs3
        pools = init_pools(ds, 6, seed=0)
        src = pools.unlabeled[0]
        wrong = (int(ds.labels[src]) + 1) % ds.class_count
        batch = QueryBatch(
            (pools.unlabeled[1],),
            (SyntheticAddition(ds.inputs[src], CEAL_PSEUDO, wrong, src),),
            1,
        )
        new, ledger = apply_query(pools, batch, self.oracle_for(ds))
        assert ledger.corrupted_pseudo == 1
        assert any(s.label == wrong for s in new.synthetic)

    def test_requerying_labeled_index_is_invariant_violation(self, blobs3):
        pools = init_pools(blobs3, 6, seed=0)
        already = pools.labeled_indices()[0]
        batch = QueryBatch((already,), (), 1)
        with pytest.raises(PoolInvariantError):
            apply_query(pools, batch, self.oracle_for(blobs3))


class TestRunActiveLearning:
    def test_zero_budget_single_record(self):
        train_ds, test_ds = blob_pair()
        cfg = quick_config("random", budget=6, initial_labeled=6)
        records = run_active_learning(cfg, train_ds, test_ds)
        assert len(records) == 1
        assert records[0].annotations_used == 6
        assert records[0].selection_seconds == 0.0

    def test_query_round_arithmetic(self):
        train_ds, test_ds = blob_pair()
        cfg = quick_config("random", budget=6 + 25, initial_labeled=6, n_query=5)
        records = run_active_learning(cfg, train_ds, test_ds)
        assert len(records) == 6  # 5 query rounds plus the final evaluation
        assert [r.annotations_used for r in records] == [6, 11, 16, 21, 26, 31]

    def test_budget_capped_on_last_round(self):
        train_ds, test_ds = blob_pair()
        cfg = quick_config("random", budget=6 + 7, initial_labeled=6, n_query=5)
        records = run_active_learning(cfg, train_ds, test_ds)
        assert [r.annotations_used for r in records] == [6, 11, 13]

    def test_records_monotone_and_seeded(self):
        train_ds, test_ds = blob_pair()
        cfg = quick_config("dfal", budget=16, n_query=5, initial_labeled=6)
        a = run_active_learning(cfg, train_ds, test_ds)
        b = run_active_learning(cfg, train_ds, test_ds)
        assert [r.annotations_used for r in a] == [6, 11, 16]
        for ra, rb in zip(a, b):
            assert ra.test_accuracy == rb.test_accuracy
            assert ra.training_set_size == rb.training_set_size

    def test_dfal_budget_ledger_invariant(self):
        train_ds, test_ds = blob_pair()
        cfg = quick_config("dfal", budget=26, n_query=5, initial_labeled=6)
        records = run_active_learning(cfg, train_ds, test_ds)
        for r in records:
            assert r.training_set_size == 6 + 2 * (r.annotations_used - 6)

    def test_non_twin_strategies_keep_sizes_equal(self):
        train_ds, test_ds = blob_pair()
        for strategy in ("uncertainty", "egl", "coreset", "random", "bald"):
            cfg = quick_config(strategy, budget=16, n_query=5, initial_labeled=6)
            for r in run_active_learning(cfg, train_ds, test_ds):
                assert r.training_set_size == r.annotations_used, strategy

    def test_ceal_pseudo_tracked_in_records(self):
        train_ds, test_ds = blob_pair()
        cfg = quick_config("ceal", budget=21, n_query=5, initial_labeled=6, ceal_delta=0.4)
        records = run_active_learning(cfg, train_ds, test_ds)
        assert any(r.pseudo_additions > 0 for r in records[1:])
        for r in records:
            assert r.training_set_size == r.annotations_used + r.pseudo_additions

    def test_unlabeled_exhaustion_terminates(self):
        train_ds, test_ds = blob_pair(points=5)  # 15 points total
        cfg = quick_config(
            "random", budget=10**6, candidates=15, n_query=5, initial_labeled=6
        )
        records = run_active_learning(cfg, train_ds, test_ds)
        assert records[-1].annotations_used == 15

    def test_mismatched_network_rejected(self):
        train_ds, test_ds = blob_pair()
        cfg = quick_config("random", network=small_net_spec(classes=3, dim=5))
        with pytest.raises(ConfigError):
            run_active_learning(cfg, train_ds, test_ds)

    def test_round_hook_sees_every_round(self):
        train_ds, test_ds = blob_pair()
        cfg = quick_config("random", budget=16, n_query=5, initial_labeled=6)
        seen = []
        run_active_learning(
            cfg, train_ds, test_ds, round_hook=lambda k, net, pools, rec: seen.append(k)
        )
        assert seen == [0, 1, 2]


class TestConfigValidation:
    def test_rejects_bad_combinations(self):
        net = small_net_spec()
        with pytest.raises(ConfigError):
            ActiveConfig(network=net, strategy="nope")
        with pytest.raises(ConfigError):
            ActiveConfig(network=net, strategy="dfal", n_query=50, candidates=10)
        with pytest.raises(ConfigError):
            ActiveConfig(network=net, strategy="dfal", initial_labeled=2)
        with pytest.raises(ConfigError):
            ActiveConfig(network=net, strategy="dfal", budget=5, initial_labeled=10)
