"""Batch synthesis of virtual outliers from midpoint-seeded Markov chains.

One synthesis call builds a chain for every (class, adjacent class) pair:
the chain starts at the normalized midpoint of the two prototypes, its
hard-margin threshold is computed once from that midpoint, and the chain
then runs a fixed number of rounds. Accepted positions across all chains
form the outlier batch; rejected rounds contribute nothing. Pairs whose
prototypes are antipodal have no midpoint and are skipped (and reported).

Chains are independent given the frozen store snapshot: each owns an RNG
spawned deterministically from the batch seed, so results are identical
regardless of execution order, and the batch is listed canonically by
(class id, adjacency rank, round).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energy import EnergyContext, hard_margin_threshold
from .errors import AntipodalPrototypesError, BadArgError, InsufficientDataError
from .metrics import knn_score
from .samplers import ChainState, HmcConfig, TransitionRecord, transition
from .sphere import normalize
from .store import ClusterPair, IdStore


@dataclass
class ChainRun:
    """Provenance of one chain inside a batch."""

    chain_index: int
    class_id: int
    rank: int  # adjacency rank of the partner cluster (0 = closest)
    pair: ClusterPair
    t_minus: float
    start: np.ndarray
    accepted: int
    records: list[TransitionRecord] = field(default_factory=list)


@dataclass
class OutlierSample:
    position: np.ndarray
    pair: ClusterPair
    chain_index: int
    round_index: int


@dataclass
class OutlierBatch:
    samples: list[OutlierSample]
    chains: list[ChainRun]
    skipped: list[ClusterPair]
    config: HmcConfig | None
    k: int | None
    delta: float | None
    kappa: float | None
    n_adj: int

    def positions(self) -> np.ndarray:
        if not self.samples:
            return np.empty((0, 0))
        return np.array([s.position for s in self.samples])

    def counts(self) -> list[int]:
        return [c.accepted for c in self.chains]

    def __len__(self) -> int:
        return len(self.samples)


def synthesize_batch(
    store: IdStore,
    cfg: HmcConfig,
    k: int,
    delta: float,
    kappa: float,
    n_adj: int,
    grad_mode: str = "analytic",
) -> OutlierBatch:
    """Run all chains for one batch of virtual outliers.

    ``store`` should be a frozen snapshot; it is only read. Every class
    buffer must hold at least ``k`` embeddings.
    """
    C = store.num_classes
    if C < 2:
        raise BadArgError(f"need at least 2 classes, got {C}")
    for c in range(C):
        if store.count(c) < k:
            raise InsufficientDataError(
                f"class {c} holds {store.count(c)} embeddings, fewer than k={k}; warm up buffers"
            )
    seeds = np.random.SeedSequence(cfg.rng_seed).spawn(C * n_adj)
    samples: list[OutlierSample] = []
    chains: list[ChainRun] = []
    skipped: list[ClusterPair] = []
    chain_index = 0
    for c in range(C):
        for rank, j in enumerate(store.adjacent_clusters(c, n_adj)):
            pair = ClusterPair(c, j)
            seed = seeds[c * n_adj + rank]
            try:
                start = store.midpoint(pair)
            except AntipodalPrototypesError:
                skipped.append(pair)
                continue
            t_minus = hard_margin_threshold(store, pair, kappa, delta)
            ctx = EnergyContext(store=store, pair=pair, k=k, kappa=kappa, grad_mode=grad_mode)
            state = ChainState(
                position=start,
                pair=pair,
                t_minus=t_minus,
                rng=np.random.default_rng(seed),
            )
            run = ChainRun(
                chain_index=chain_index,
                class_id=c,
                rank=rank,
                pair=pair,
                t_minus=t_minus,
                start=start,
                accepted=0,
            )
            for _ in range(cfg.rounds):
                state, rec = transition(ctx, state, cfg)
                run.records.append(rec)
                if rec.accepted:
                    run.accepted += 1
                    samples.append(
                        OutlierSample(
                            position=state.position.copy(),
                            pair=pair,
                            chain_index=chain_index,
                            round_index=state.round_index,
                        )
                    )
            chains.append(run)
            chain_index += 1
    return OutlierBatch(
        samples=samples,
        chains=chains,
        skipped=skipped,
        config=cfg,
        k=k,
        delta=delta,
        kappa=kappa,
        n_adj=n_adj,
    )


@dataclass
class RoundScores:
    round_index: int
    mean: float
    std: float
    min: float
    max: float
    scores: np.ndarray


def round_wise_scores(batch: OutlierBatch, store: IdStore, k_detect: int) -> list[RoundScores]:
    """kNN detection-score distribution of the batch, grouped by synthesis round."""
    if not batch.samples:
        raise BadArgError("cannot compute round-wise scores of an empty batch")
    reference = store.all_embeddings()
    by_round: dict[int, list[float]] = {}
    for s in batch.samples:
        by_round.setdefault(s.round_index, []).append(knn_score(reference, s.position, k_detect))
    out = []
    for r in sorted(by_round):
        scores = np.array(by_round[r])
        out.append(
            RoundScores(
                round_index=r,
                mean=float(scores.mean()),
                std=float(scores.std()),
                min=float(scores.min()),
                max=float(scores.max()),
                scores=scores,
            )
        )
    return out


def gaussian_baseline_batch(
    store: IdStore,
    sigma: float,
    count_per_pair: int,
    n_adj: int,
    seed: int = 0,
) -> OutlierBatch:
    """Gaussian-perturbation baseline: noise around each pair midpoint.

    Shares the batch shape of ``synthesize_batch`` so the two synthesis
    routes can be compared sample-for-sample.
    """
    C = store.num_classes
    rng = np.random.default_rng(seed)
    samples: list[OutlierSample] = []
    chains: list[ChainRun] = []
    skipped: list[ClusterPair] = []
    chain_index = 0
    for c in range(C):
        for rank, j in enumerate(store.adjacent_clusters(c, n_adj)):
            pair = ClusterPair(c, j)
            try:
                b = store.midpoint(pair)
            except AntipodalPrototypesError:
                skipped.append(pair)
                continue
            run = ChainRun(
                chain_index=chain_index,
                class_id=c,
                rank=rank,
                pair=pair,
                t_minus=float("nan"),
                start=b,
                accepted=count_per_pair,
            )
            for i in range(count_per_pair):
                g = rng.standard_normal(store.dim)
                pos = normalize(b + sigma * g) if sigma > 0 else b.copy()
                samples.append(
                    OutlierSample(
                        position=pos, pair=pair, chain_index=chain_index, round_index=i + 1
                    )
                )
            chains.append(run)
            chain_index += 1
    return OutlierBatch(
        samples=samples,
        chains=chains,
        skipped=skipped,
        config=None,
        k=None,
        delta=None,
        kappa=None,
        n_adj=n_adj,
    )


# -- export ----------------------------------------------------------------


def batch_to_dict(batch: OutlierBatch) -> dict:
    """JSON-ready representation of a batch (samples plus chain metadata)."""
    return {
        "n_adj": batch.n_adj,
        "k": batch.k,
        "delta": batch.delta,
        "kappa": batch.kappa,
        "config": None
        if batch.config is None
        else {
            "leapfrog_steps": batch.config.leapfrog_steps,
            "step_size": batch.config.step_size,
            "rounds": batch.config.rounds,
            "variant": batch.config.variant.value,
            "rng_seed": batch.config.rng_seed,
            "history_window": batch.config.history_window,
        },
        "skipped": [[p.u, p.v] for p in batch.skipped],
        "chains": [
            {
                "chain_index": c.chain_index,
                "class_id": c.class_id,
                "rank": c.rank,
                "pair": [c.pair.u, c.pair.v],
                "t_minus": c.t_minus,
                "accepted": c.accepted,
            }
            for c in batch.chains
        ],
        "samples": [
            {
                "chain_index": s.chain_index,
                "pair": [s.pair.u, s.pair.v],
                "round": s.round_index,
                "position": s.position.tolist(),
            }
            for s in batch.samples
        ],
    }


def write_batch_json(batch: OutlierBatch, path: str | Path) -> None:
    Path(path).write_text(json.dumps(batch_to_dict(batch), sort_keys=True))


def write_batch_csv(batch: OutlierBatch, path: str | Path) -> None:
    """One row per sample: chain metadata then the raw coordinates."""
    dim = batch.samples[0].position.shape[0] if batch.samples else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["chain_index", "class_u", "class_v", "round"] + [f"x{i}" for i in range(dim)]
        )
        for s in batch.samples:
            writer.writerow(
                [s.chain_index, s.pair.u, s.pair.v, s.round_index]
                + [repr(x) for x in s.position]
            )


def write_trace_jsonl(batch: OutlierBatch, path: str | Path) -> None:
    """Per-transition trace (one JSON object per line) for debugging and figures."""

    def _num(x: float):
        return None if x != x else x  # NaN -> null

    with open(path, "w") as fh:
        for c in batch.chains:
            for i, rec in enumerate(c.records, start=1):
                fh.write(
                    json.dumps(
                        {
                            "chain_index": c.chain_index,
                            "pair": [c.pair.u, c.pair.v],
                            "round": i,
                            "alpha": _num(min(rec.alpha, 1e308)),
                            "h_init": _num(rec.h_init),
                            "h_prop": _num(rec.h_prop),
                            "mh_accept": rec.mh_accept,
                            "margin_pass": rec.margin_pass,
                            "accepted": rec.accepted,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
