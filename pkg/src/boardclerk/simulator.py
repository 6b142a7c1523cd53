"""Deterministic discrete-event network simulation.

Nodes exchange proposals through a simulated reliable broadcast: for every
(broadcast, destination) pair the completion delay is the (2f+1)-th smallest
of n per-link samples plus one extra round-trip (two more samples), so with
constant link delay d every live node completes at 3d.  Crashed destinations
never complete; totality for live nodes holds by construction.

All randomness is derived from the run seed through per-purpose hash-keyed
streams, so results are replayable and independent of event interleaving.
Protocol logic never reads delay parameters.
"""

from __future__ import annotations

import heapq
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .board import BoardState, TxEvent
from .clerk import Clerk, CommitEmission, elect_leader
from .dag import AddResult, DagStore, Proposal
from .hashing import digest, enc_bytes, enc_i64, enc_u32, enc_u64
from .hyperblock import (
    OFF,
    Attestation,
    HyperblockEngine,
    WitnessRejected,
)
from .utxo import (
    Batch,
    Script,
    ScriptKind,
    Transaction,
    TxInput,
    TxPhase,
    TxResult,
    Txo,
    batch_id as compute_batch_id,
    check_internal_validity,
    make_transaction,
)

DELAY_UNIFORM = "uniform"
DELAY_EXPONENTIAL = "exponential"

LINK_ALL = "all"
LINK_QUORUM = "quorum"

ORDER_CLERK_FIRST = "clerk_first"
ORDER_BOARD_FIRST = "board_first"


@dataclass
class SimConfig:
    n: int = 4
    f: int = -1  # -1 derives floor((n-1)/3)
    seed: int = 0
    delay_model: str = DELAY_UNIFORM
    delay_mean: float = 1.0
    delay_low: float = 0.5
    delay_high: float = 1.5
    tx_rate: float = 8.0  # transactions per time unit, whole system
    conflict_fraction: float = 0.0
    max_rounds: int = 100
    max_time: Optional[float] = None
    mode: str = OFF
    hybrid_conflict_threshold: int = 16
    max_witness_paths: int = 0
    batch_cap: int = 256
    genesis_pool: int = 4096
    link_policy: str = LINK_ALL
    order_policy: str = ORDER_CLERK_FIRST
    tx_stop_margin: int = 10
    crashes: tuple[tuple[int, float], ...] = ()

    def resolved_f(self) -> int:
        return (self.n - 1) // 3 if self.f < 0 else self.f

    def validate(self) -> None:
        f = self.resolved_f()
        if self.n < 3 * f + 1:
            raise ValueError(f"n={self.n} violates n >= 3f+1 for f={f}")
        if not 0.0 <= self.conflict_fraction <= 1.0:
            raise ValueError("conflict fraction must be in [0, 1]")
        if self.delay_model not in (DELAY_UNIFORM, DELAY_EXPONENTIAL):
            raise ValueError(f"unknown delay model {self.delay_model}")
        if self.link_policy not in (LINK_ALL, LINK_QUORUM):
            raise ValueError(f"unknown link policy {self.link_policy}")
        if self.order_policy not in (ORDER_CLERK_FIRST, ORDER_BOARD_FIRST):
            raise ValueError(f"unknown order policy {self.order_policy}")
        for node, _ in self.crashes:
            if not 0 <= node < self.n:
                raise ValueError(f"crash schedule names unknown node {node}")

    def canonical(self) -> str:
        crashes = ",".join(f"{n}:{t}" for n, t in self.crashes)
        fields = [
            f"n={self.n}",
            f"f={self.resolved_f()}",
            f"seed={self.seed}",
            f"delay_model={self.delay_model}",
            f"delay_mean={self.delay_mean}",
            f"delay_low={self.delay_low}",
            f"delay_high={self.delay_high}",
            f"tx_rate={self.tx_rate}",
            f"conflict_fraction={self.conflict_fraction}",
            f"max_rounds={self.max_rounds}",
            f"max_time={self.max_time}",
            f"mode={self.mode}",
            f"hybrid_conflict_threshold={self.hybrid_conflict_threshold}",
            f"max_witness_paths={self.max_witness_paths}",
            f"batch_cap={self.batch_cap}",
            f"genesis_pool={self.genesis_pool}",
            f"link_policy={self.link_policy}",
            f"order_policy={self.order_policy}",
            f"tx_stop_margin={self.tx_stop_margin}",
            f"crashes={crashes}",
        ]
        return "\n".join(fields)

    def config_hash(self) -> str:
        return digest(self.canonical().encode()).hex()[:16]


def _keyed_rng(seed: int, *parts: int | str) -> random.Random:
    data = enc_i64(seed)
    for part in parts:
        if isinstance(part, str):
            data += enc_bytes(part.encode())
        else:
            data += enc_u64(part)
    return random.Random(int.from_bytes(digest(data)[:8], "big"))


def _sample_delay(cfg: SimConfig, rng: random.Random) -> float:
    if cfg.delay_model == DELAY_UNIFORM:
        return rng.uniform(cfg.delay_low, cfg.delay_high)
    return rng.expovariate(1.0 / cfg.delay_mean)


def rbc_completion_delay(cfg: SimConfig, author: int, round_: int, dest: int) -> float:
    """Echo-quorum order statistic plus one round trip, per destination."""
    rng = _keyed_rng(cfg.seed, "rbc", author, round_, dest)
    f = cfg.resolved_f()
    samples = sorted(_sample_delay(cfg, rng) for _ in range(cfg.n))
    quorum = samples[min(2 * f, cfg.n - 1)]
    return quorum + _sample_delay(cfg, rng) + _sample_delay(cfg, rng)


@dataclass
class LatencyRecord:
    tx_id: bytes
    node: int
    submit_time: float
    submit_round: int
    fast_time: Optional[float] = None
    fast_round: Optional[int] = None
    fast_result: Optional[TxResult] = None
    commit_time: Optional[float] = None
    commit_round: Optional[int] = None
    result: Optional[TxResult] = None


class Workload:
    """Internally valid single-input transactions over a genesis pool.

    With the configured probability, a transaction reuses an input already
    assigned to a recently emitted transaction at a different node, creating
    a cross-node double spend.  The pool refills from committed outputs.
    """

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.registry: dict[bytes, Txo] = {}
        self.pool: deque[bytes] = deque()
        for i in range(cfg.genesis_pool):
            txo = Txo(
                id=digest(b"genesis" + enc_u32(i)),
                data=b"",
                script=Script(ScriptKind.ALWAYS_TRUE),
            )
            self.registry[txo.id] = txo
            self.pool.append(txo.id)
        self.recent: deque[tuple[int, Transaction]] = deque(maxlen=64)
        self.emitted = 0

    def resolve(self, txo_id: bytes) -> Txo:
        return self.registry[txo_id]

    def add_spendable(self, txo: Txo) -> None:
        if txo.id not in self.registry:
            self.registry[txo.id] = txo
        self.pool.append(txo.id)

    def next_tx(self, node: int, index: int) -> Optional[Transaction]:
        rng = _keyed_rng(self.cfg.seed, "tx", node, index)
        ref: Optional[bytes] = None
        if self.cfg.conflict_fraction > 0 and rng.random() < self.cfg.conflict_fraction:
            others = [(v, tx) for v, tx in self.recent if v != node]
            if others:
                _, victim = others[rng.randrange(len(others))]
                ref = sorted(victim.input_refs())[0]
        if ref is None:
            if not self.pool:
                return None
            ref = self.pool.popleft()
        salt = enc_u32(node) + enc_u64(index)
        tx = make_transaction(
            [TxInput(ref=ref, witness=b"")],
            [(salt, Script(ScriptKind.ALWAYS_TRUE))],
        )
        for out in tx.outputs:
            self.registry[out.id] = out
        assert check_internal_validity(tx, self.resolve)
        self.recent.append((node, tx))
        self.emitted += 1
        return tx


class SimNode:
    def __init__(self, node_id: int, cfg: SimConfig, sim: "Simulation"):
        self.id = node_id
        self.cfg = cfg
        self.sim = sim
        n, f = cfg.n, cfg.resolved_f()
        self.dag = DagStore(n, f)
        self.board = BoardState(
            n,
            f,
            self.dag,
            coin=lambda r: sim.elect(r),
            listener=lambda ev: sim.on_tx_event(self.id, ev),
        )
        self.clerk = Clerk(n, f, cfg.seed, self.dag, self.board)
        self.engine = HyperblockEngine(
            node_id,
            n,
            f,
            cfg.seed,
            self.dag,
            self.board,
            self.clerk,
            mode=cfg.mode,
            max_witness_paths=cfg.max_witness_paths,
            hybrid_conflict_threshold=cfg.hybrid_conflict_threshold,
        )
        self.alive = True
        self.next_round = 0
        self.pending_txs: deque[Transaction] = deque()
        self.inserted_by_round: dict[int, list[bytes]] = {}
        self.deferred: list[tuple[Proposal, list[Batch]]] = []

    # -- insertion pipeline -----------------------------------------------------

    def receive(self, p: Proposal, batches: list[Batch], now: float) -> None:
        if not self.alive:
            return
        for batch in batches:
            self.dag.add_batch(batch)
        result = self.dag.add_proposal(p)
        if result is AddResult.DEFERRED:
            self.deferred.append((p, batches))
            return
        if result is AddResult.REJECTED:
            raise RuntimeError(
                f"node {self.id} rejected proposal {p.round}/{p.author}: honest runs must not reject"
            )
        self._after_insert(p, now)
        self._retry_deferred(now)
        self.maybe_propose(now)

    def _retry_deferred(self, now: float) -> None:
        progress = True
        while progress and self.deferred:
            progress = False
            remaining = []
            for p, batches in self.deferred:
                result = self.dag.add_proposal(p)
                if result is AddResult.DEFERRED:
                    remaining.append((p, batches))
                    continue
                if result is AddResult.REJECTED:
                    raise RuntimeError(f"node {self.id} rejected deferred proposal")
                progress = True
                self._after_insert(p, now)
            self.deferred = remaining

    def _after_insert(self, p: Proposal, now: float) -> None:
        self.inserted_by_round.setdefault(p.round, []).append(p.id)
        if self.cfg.order_policy == ORDER_CLERK_FIRST:
            self.clerk.on_insert(p, now)
            self.board.process(p, now)
        else:
            self.board.process(p, now)
            self.clerk.on_insert(p, now)
        if self.cfg.mode != OFF:
            try:
                attestation = self.engine.on_insert(p)
            except WitnessRejected as exc:
                self.sim.witness_rejections.append((self.id, p.id, exc.entry_index, exc.reason))
            else:
                if attestation is not None:
                    self.sim.attestations.setdefault(p.id, {})[self.id] = attestation

    # -- proposing ----------------------------------------------------------------

    def maybe_propose(self, now: float) -> None:
        while self.alive and self.next_round <= self.cfg.max_rounds:
            r = self.next_round
            parents: tuple[bytes, ...] = ()
            if r > 0:
                inserted = self.inserted_by_round.get(r - 1, [])
                if len(inserted) < 2 * self.dag.f + 1:
                    return
                own_prev = self.dag.by_author_round.get((self.id, r - 1))
                if own_prev is None:
                    return
                if self.cfg.link_policy == LINK_QUORUM:
                    chosen = list(inserted[: 2 * self.dag.f + 1])
                    if own_prev not in chosen:
                        chosen.append(own_prev)
                    parents = tuple(chosen)
                else:
                    parents = tuple(inserted)

            batch = self._build_batch()
            batch_ids = (batch.id,) if batch is not None else ()
            if batch is not None:
                self.dag.add_batch(batch)

            witness = None
            if self.engine.needs_witness(r):
                witness = self.engine.build_witness(self.id, r, batch_ids, parents)
            p = Proposal(author=self.id, round=r, batches=batch_ids, parents=parents, witness=witness)
            self.next_round += 1
            self.sim.broadcast(p, [batch] if batch is not None else [], now)

    def _build_batch(self) -> Optional[Batch]:
        if not self.pending_txs:
            return None
        txs: list[Transaction] = []
        spent: set[bytes] = set()
        requeue: list[Transaction] = []
        while self.pending_txs and len(txs) < self.cfg.batch_cap:
            tx = self.pending_txs.popleft()
            refs = tx.input_refs()
            if refs & spent:
                requeue.append(tx)  # same-node conflict: defer to a later batch
                continue
            spent.update(refs)
            txs.append(tx)
        self.pending_txs.extendleft(reversed(requeue))
        if not txs:
            return None
        return Batch(id=compute_batch_id([t.id for t in txs]), txs=tuple(txs))


_EV_INIT = 0
_EV_CRASH = 1
_EV_CLIENT_TX = 2
_EV_RBC = 3


@dataclass
class SimResult:
    config: SimConfig
    records: dict[bytes, LatencyRecord]
    message_log: list[tuple[float, int, int, bytes]]
    nodes: list[SimNode]
    truncated: bool
    hash_name: str
    workload_emitted: int
    witness_rejections: list[tuple[int, bytes, int, str]]
    attestations: dict[bytes, dict[int, Attestation]]

    def proposals_per_round(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for _, round_, _, _ in self.message_log:
            counts[round_] = counts.get(round_, 0) + 1
        return counts

    def live_nodes(self) -> list[SimNode]:
        return [node for node in self.nodes if node.alive]

    def leader_decision_log(self, node: int) -> list[tuple[int, int, str, float]]:
        return list(self.nodes[node].clerk.decision_log)


class Simulation:
    def __init__(self, cfg: SimConfig):
        cfg.validate()
        self.cfg = cfg
        self.nodes = [SimNode(i, cfg, self) for i in range(cfg.n)]
        self.workload = Workload(cfg)
        self.records: dict[bytes, LatencyRecord] = {}
        self.message_log: list[tuple[float, int, int, bytes]] = []
        self.attestations: dict[bytes, dict[int, Attestation]] = {}
        self.witness_rejections: list[tuple[int, bytes, int, str]] = []
        self._heap: list[tuple[float, int, int, tuple]] = []
        self._seq = 0
        self._arrival_index = [0] * cfg.n
        self._tx_objects: dict[bytes, Transaction] = {}
        self._tx_generation_stopped = False
        self.max_created_round = -1
        self.truncated = False

    # -- coin ---------------------------------------------------------------------

    def elect(self, round_: int) -> int:
        return elect_leader(self.cfg.seed, round_, self.cfg.n)

    # -- scheduling -----------------------------------------------------------------

    def _schedule(self, time: float, kind: int, payload: tuple) -> None:
        heapq.heappush(self._heap, (time, self._seq, kind, payload))
        self._seq += 1

    def broadcast(self, p: Proposal, batches: list[Batch], now: float) -> None:
        node = self.nodes[p.author]
        if not node.alive:
            return
        self.message_log.append((now, p.round, p.author, p.id))
        if p.round > self.max_created_round:
            self.max_created_round = p.round
        for dest in range(self.cfg.n):
            delay = rbc_completion_delay(self.cfg, p.author, p.round, dest)
            self._schedule(now + delay, _EV_RBC, (p, batches, dest))

    def _schedule_next_arrival(self, node: int, now: float) -> None:
        if self._tx_generation_stopped:
            return
        # Quorum loss stalls all progress; stop the workload so the run drains.
        alive = sum(1 for nd in self.nodes if nd.alive)
        if alive < 2 * self.cfg.resolved_f() + 1:
            self._tx_generation_stopped = True
            return
        rng = _keyed_rng(self.cfg.seed, "arrival", node, self._arrival_index[node])
        per_node_rate = self.cfg.tx_rate / self.cfg.n
        if per_node_rate <= 0:
            return
        gap = rng.expovariate(per_node_rate)
        self._schedule(now + gap, _EV_CLIENT_TX, (node,))

    # -- event handlers ----------------------------------------------------------------

    def on_tx_event(self, node_id: int, ev: TxEvent) -> None:
        rec = self.records.get(ev.tx_id)
        if rec is None or rec.node != node_id:
            return
        if ev.phase is TxPhase.FAST_COMMITTED:
            rec.fast_time = ev.time
            rec.fast_round = ev.round
            rec.fast_result = ev.result
        elif ev.phase is TxPhase.COMMITTED:
            rec.commit_time = ev.time
            rec.commit_round = ev.round
            rec.result = ev.result
            if ev.result is TxResult.SUCCESS:
                # Committed outputs become spendable again at the origin node.
                tx = self._tx_objects.get(ev.tx_id)
                if tx is not None:
                    for out in tx.outputs:
                        self.workload.add_spendable(out)

    def _handle_client_tx(self, node_id: int, now: float) -> None:
        node = self.nodes[node_id]
        index = self._arrival_index[node_id]
        self._arrival_index[node_id] += 1
        if self.max_created_round >= self.cfg.max_rounds - self.cfg.tx_stop_margin:
            self._tx_generation_stopped = True
        if node.alive and not self._tx_generation_stopped:
            tx = self.workload.next_tx(node_id, index)
            if tx is not None:
                node.pending_txs.append(tx)
                self._tx_objects[tx.id] = tx
                self.records[tx.id] = LatencyRecord(
                    tx_id=tx.id,
                    node=node_id,
                    submit_time=now,
                    submit_round=max(node.next_round - 1, 0),
                )
        self._schedule_next_arrival(node_id, now)

    # -- run -----------------------------------------------------------------------------

    def run(self) -> SimResult:
        # Crashes are scheduled first so a crash at t=0 silences the node
        # before it proposes its genesis round.
        for node_id, time in self.cfg.crashes:
            self._schedule(time, _EV_CRASH, (node_id,))
        for node_id in range(self.cfg.n):
            self._schedule(0.0, _EV_INIT, (node_id,))
        for node_id in range(self.cfg.n):
            self._schedule_next_arrival(node_id, 0.0)

        while self._heap:
            time, _, kind, payload = heapq.heappop(self._heap)
            if self.cfg.max_time is not None and time > self.cfg.max_time:
                self.truncated = True
                break
            if kind == _EV_INIT:
                self.nodes[payload[0]].maybe_propose(time)
            elif kind == _EV_CRASH:
                self.nodes[payload[0]].alive = False
            elif kind == _EV_CLIENT_TX:
                self._handle_client_tx(payload[0], time)
            elif kind == _EV_RBC:
                p, batches, dest = payload
                self.nodes[dest].receive(p, batches, time)

        from .hashing import HASH_NAME

        return SimResult(
            config=self.cfg,
            records=self.records,
            message_log=self.message_log,
            nodes=self.nodes,
            truncated=self.truncated,
            hash_name=HASH_NAME,
            workload_emitted=self.workload.emitted,
            witness_rejections=self.witness_rejections,
            attestations=self.attestations,
        )


def run(cfg: SimConfig) -> SimResult:
    """Execute one seeded simulation; a pure function of the configuration."""
    return Simulation(cfg).run()
