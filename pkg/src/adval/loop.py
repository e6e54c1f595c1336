"""Round-based active learning: train, score, query, update, repeat.

One round = retrain the network from scratch on everything labeled so far
(real samples plus synthetic additions), evaluate test accuracy, draw the
candidate pool, ask the strategy for a query batch, and apply it against the
simulated oracle. The loop stops once the annotation budget is spent or the
unlabeled pool runs dry.

Budget semantics: the budget counts oracle label requests. Adversarial twins
are free, so a twin-producing run grows the training set by two items per
annotation while charging one.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from adval.attacks import AttackConfig
from adval.data import Dataset
from adval.errors import ConfigError, PoolInvariantError
from adval.nn.network import NetworkSpec, accuracy, init_network
from adval.nn.training import TrainConfig, epochs_for_budget, train
from adval.strategies import (
    ADVERSARIAL_TWIN,
    CEAL_PSEUDO,
    STRATEGY_IDS,
    SUBSET_STRATEGIES,
    CandidateSet,
    QueryBatch,
    SyntheticAddition,
    select_bald,
    select_ceal,
    select_coreset_greedy,
    select_dfal,
    select_egl,
    select_random,
    select_uncertainty,
)

# Independent seed streams derived from (seed, round, stream).
_STREAM_POOL_INIT = 0
_STREAM_TRAIN = 1
_STREAM_CANDIDATES = 2
_STREAM_STRATEGY = 3


def derive_seed(seed: int, round_index: int, stream: int) -> int:
    return int(np.random.SeedSequence((seed, round_index, stream)).generate_state(1)[0])


@dataclass(frozen=True)
class PoolState:
    labeled: tuple[tuple[int, int], ...]  # (dataset index, label), insertion order
    unlabeled: tuple[int, ...]
    synthetic: tuple[SyntheticAddition, ...]

    def labeled_indices(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.labeled)

    def check_conservation(self, universe_size: int) -> None:
        lab = set(self.labeled_indices())
        unl = set(self.unlabeled)
        if lab & unl:
            raise PoolInvariantError(f"labeled and unlabeled overlap: {sorted(lab & unl)[:5]}")
        if len(lab | unl) != universe_size:
            raise PoolInvariantError(
                f"labeled+unlabeled covers {len(lab | unl)} of {universe_size} indices"
            )


@dataclass(frozen=True)
class BudgetLedger:
    annotations_used: int
    training_set_size: int
    pseudo_additions: int
    corrupted_pseudo: int


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    annotations_used: int
    training_set_size: int
    test_accuracy: float
    selection_seconds: float
    train_seconds: float
    pseudo_additions: int = 0
    pseudo_corruptions: int = 0


@dataclass(frozen=True)
class ActiveConfig:
    network: NetworkSpec
    strategy: str
    candidates: int = 200  # size of the random candidate pool drawn each round
    n_query: int = 10
    budget: int = 1020  # total annotations, initial labels included
    initial_labeled: int = 20
    base_steps: int = 2000  # per-round gradient-step budget
    train: TrainConfig = field(default_factory=TrainConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    ceal_delta: float = 0.05
    bald_samples: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGY_IDS:
            raise ConfigError(f"unknown strategy {self.strategy!r}; expected {STRATEGY_IDS}")
        if self.n_query < 1 or self.n_query > self.candidates:
            raise ConfigError("need 1 <= n_query <= candidates")
        if self.initial_labeled < self.network.class_count:
            raise ConfigError("initial_labeled must cover at least one sample per class")
        if self.budget < self.initial_labeled:
            raise ConfigError("budget must be >= initial_labeled")
        if self.base_steps < 1:
            raise ConfigError("base_steps must be positive")


def init_pools(dataset: Dataset, initial_labeled: int, seed: int) -> PoolState:
    """Stratified random initial labeled set: equal per-class counts, remainder random."""
    c = dataset.class_count
    if initial_labeled < c:
        raise ConfigError(
            f"initial_labeled={initial_labeled} cannot cover {c} classes"
        )
    if initial_labeled > len(dataset):
        raise ConfigError("initial_labeled exceeds dataset size")
    rng = np.random.default_rng(seed)
    per_class = initial_labeled // c
    chosen: list[int] = []
    leftover: list[np.ndarray] = []
    for cls in range(c):
        members = rng.permutation(np.flatnonzero(dataset.labels == cls))
        if len(members) < per_class:
            raise ConfigError(f"class {cls} has only {len(members)} samples, need {per_class}")
        chosen.extend(int(i) for i in members[:per_class])
        leftover.append(members[per_class:])
    rest = np.concatenate(leftover)
    extra = initial_labeled - per_class * c
    if extra:
        chosen.extend(int(i) for i in rng.choice(rest, size=extra, replace=False))
    chosen_sorted = sorted(chosen)
    labeled = tuple((i, int(dataset.labels[i])) for i in chosen_sorted)
    unlabeled = tuple(i for i in range(len(dataset)) if i not in set(chosen_sorted))
    return PoolState(labeled=labeled, unlabeled=unlabeled, synthetic=())


def sample_candidates(pool_state: PoolState, k: int, round_seed: int) -> np.ndarray:
    """Uniform without replacement from the unlabeled pool, fresh each round."""
    unlabeled = np.asarray(pool_state.unlabeled)
    if len(unlabeled) == 0:
        return unlabeled
    rng = np.random.default_rng(round_seed)
    take = min(k, len(unlabeled))
    return np.sort(rng.choice(unlabeled, size=take, replace=False))


def apply_query(pool_state: PoolState, batch: QueryBatch, oracle) -> tuple[PoolState, BudgetLedger]:
    """Label the queried indices and absorb synthetic additions.

    Twins inherit the oracle label of their source (the very label just paid
    for), so they can never corrupt the training set. Pseudo-labeled items are
    recomputed from the current model each round: the previous pseudo set is
    dropped before the new one is appended. Corruption of pseudo labels is
    counted against the oracle but deliberately left in place.

    Returns the new pool state and its ledger snapshot.
    """
    unlabeled = set(pool_state.unlabeled)
    dupes = [i for i in batch.queried if i not in unlabeled]
    if dupes:
        raise PoolInvariantError(f"queried indices not in unlabeled pool: {dupes[:5]}")
    if len(set(batch.queried)) != len(batch.queried):
        raise PoolInvariantError("queried indices are not distinct")

    labels = {i: int(oracle(i)) for i in batch.queried}
    labeled = pool_state.labeled + tuple((i, labels[i]) for i in batch.queried)
    remaining = tuple(i for i in pool_state.unlabeled if i not in labels)

    kept = tuple(s for s in pool_state.synthetic if s.provenance != CEAL_PSEUDO)
    fresh: list[SyntheticAddition] = []
    corrupted = 0
    for add in batch.synthetic_additions:
        if add.provenance == ADVERSARIAL_TWIN:
            fresh.append(replace(add, label=labels[add.source_index]))
        elif add.provenance == CEAL_PSEUDO:
            if add.label != int(oracle(add.source_index)):
                corrupted += 1
            fresh.append(add)
        else:
            raise PoolInvariantError(f"unknown provenance {add.provenance!r}")
    new_state = PoolState(labeled, remaining, kept + tuple(fresh))
    ledger = BudgetLedger(
        annotations_used=len(labeled),
        training_set_size=len(labeled) + len(new_state.synthetic),
        pseudo_additions=sum(1 for s in new_state.synthetic if s.provenance == CEAL_PSEUDO),
        corrupted_pseudo=corrupted,
    )
    return new_state, ledger


def training_examples(pool_state: PoolState, dataset: Dataset):
    """Real labeled samples plus synthetic additions, in insertion order."""
    examples = [(dataset.inputs[i], label) for i, label in pool_state.labeled]
    for add in pool_state.synthetic:
        if add.label is None:
            raise PoolInvariantError("synthetic item reached training without a label")
        examples.append((add.values, add.label))
    return examples


def count_pseudo_corruptions(pool_state: PoolState, dataset: Dataset) -> int:
    return sum(
        1
        for s in pool_state.synthetic
        if s.provenance == CEAL_PSEUDO and s.label != int(dataset.labels[s.source_index])
    )


def _select(cfg: ActiveConfig, net, pool_state: PoolState, dataset: Dataset, round_index: int) -> QueryBatch:
    if cfg.strategy in SUBSET_STRATEGIES:
        indices = sample_candidates(
            pool_state, cfg.candidates, derive_seed(cfg.seed, round_index, _STREAM_CANDIDATES)
        )
    else:
        indices = np.asarray(pool_state.unlabeled)
    pool = CandidateSet(indices, dataset.inputs[indices])
    remaining_budget = cfg.budget - len(pool_state.labeled)
    n_query = min(cfg.n_query, remaining_budget, len(pool))
    strategy_seed = derive_seed(cfg.seed, round_index, _STREAM_STRATEGY)
    if cfg.strategy == "dfal":
        return select_dfal(net, pool, n_query, cfg.attack, fallback_seed=strategy_seed)
    if cfg.strategy == "uncertainty":
        return select_uncertainty(net, pool, n_query)
    if cfg.strategy == "ceal":
        return select_ceal(net, pool, n_query, cfg.ceal_delta)
    if cfg.strategy == "egl":
        return select_egl(net, pool, n_query)
    if cfg.strategy == "bald":
        return select_bald(net, pool, n_query, samples=cfg.bald_samples, seed=strategy_seed)
    if cfg.strategy == "coreset":
        labeled_inputs = dataset.inputs[list(pool_state.labeled_indices())]
        return select_coreset_greedy(net, labeled_inputs, pool, n_query)
    if cfg.strategy == "random":
        return select_random(pool, n_query, seed=strategy_seed)
    raise ConfigError(f"unknown strategy {cfg.strategy!r}")


def run_active_learning(
    cfg: ActiveConfig,
    dataset: Dataset,
    test_set: Dataset,
    round_hook=None,
) -> list[RoundRecord]:
    """Run the full loop; one RoundRecord per trained round, in order.

    ``round_hook(round_index, net, pool_state, record)`` runs after each
    round's evaluation, before the pool update; transfer experiments use it to
    retrain a consumer network on the same labeled set.
    """
    if dataset.input_shape != cfg.network.input_shape:
        raise ConfigError(
            f"dataset shape {dataset.input_shape} does not match network "
            f"input {cfg.network.input_shape}"
        )
    if dataset.class_count != cfg.network.class_count:
        raise ConfigError("dataset and network disagree on class count")
    if not dataset.classes_present():
        raise ConfigError("dataset is missing at least one class")

    pools = init_pools(
        dataset, cfg.initial_labeled, derive_seed(cfg.seed, 0, _STREAM_POOL_INIT)
    )
    oracle = lambda i: int(dataset.labels[i])  # noqa: E731 - simulated annotator
    records: list[RoundRecord] = []
    round_index = 0
    while True:
        pools.check_conservation(len(dataset))
        examples = training_examples(pools, dataset)
        epochs = epochs_for_budget(cfg.base_steps, cfg.train.batch_size, len(examples))
        tcfg = replace(
            cfg.train, epochs=epochs, seed=derive_seed(cfg.seed, round_index, _STREAM_TRAIN)
        )
        t0 = time.monotonic()
        net = train(init_network(cfg.network), examples, tcfg)
        train_seconds = time.monotonic() - t0

        test_accuracy = accuracy(net, test_set.inputs, test_set.labels)
        annotations = len(pools.labeled)
        done = annotations >= cfg.budget or not pools.unlabeled

        batch = None
        selection_seconds = 0.0
        if not done:
            t0 = time.monotonic()
            batch = _select(cfg, net, pools, dataset, round_index)
            selection_seconds = time.monotonic() - t0

        record = RoundRecord(
            round_index=round_index,
            annotations_used=annotations,
            training_set_size=len(examples),
            test_accuracy=test_accuracy,
            selection_seconds=selection_seconds,
            train_seconds=train_seconds,
            pseudo_additions=sum(
                1 for s in pools.synthetic if s.provenance == CEAL_PSEUDO
            ),
            pseudo_corruptions=count_pseudo_corruptions(pools, dataset),
        )
        records.append(record)
        if round_hook is not None:
            round_hook(round_index, net, pools, record)
        if done:
            break
        pools, _ = apply_query(pools, batch, oracle)
        round_index += 1
    return records
