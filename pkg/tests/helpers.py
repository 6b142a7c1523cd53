"""Shared builders for tests: transactions, batches, DAG fixtures."""

from __future__ import annotations

import random

from boardclerk.board import BoardState
from boardclerk.clerk import Clerk, elect_leader
from boardclerk.dag import AddResult, DagStore, Proposal
from boardclerk.hashing import digest, enc_u32
from boardclerk.utxo import (
    Batch,
    Script,
    ScriptKind,
    Transaction,
    TxInput,
    batch_id,
    make_transaction,
)

ALWAYS = Script(ScriptKind.ALWAYS_TRUE)


def fresh_txo_id(tag: int) -> bytes:
    return digest(b"txo" + enc_u32(tag))


def tx_spending(refs: list[bytes], salt: int = 0) -> Transaction:
    return make_transaction(
        [TxInput(ref=r, witness=b"") for r in refs],
        [(enc_u32(salt), ALWAYS)],
    )


def batch_of(txs: list[Transaction]) -> Batch:
    return Batch(id=batch_id([t.id for t in txs]), txs=tuple(txs))


class Cluster:
    """A DAG/board/clerk triple driven by explicit proposal insertion."""

    def __init__(self, n: int = 4, f: int = 1, seed: int = 0):
        self.n, self.f, self.seed = n, f, seed
        self.dag = DagStore(n, f)
        self.board = BoardState(n, f, self.dag, coin=lambda r: elect_leader(seed, r, n))
        self.clerk = Clerk(n, f, seed, self.dag, self.board)
        self.clock = 0.0

    def insert(self, p: Proposal, batches: list[Batch] = (), process=True):
        for b in batches:
            self.dag.add_batch(b)
        result = self.dag.add_proposal(p)
        assert result is AddResult.ACCEPTED, f"insert failed: {result}"
        self.clock += 1.0
        emissions = self.clerk.on_insert(p, self.clock)
        fast = []
        if process:
            fast = self.board.process(p, self.clock)
        return emissions, fast

    def propose(self, author: int, round_: int, batches: list[Batch] = (), parents=None):
        if parents is None:
            parents = [q.id for q in self.dag.by_round.get(round_ - 1, [])] if round_ > 0 else []
        for b in batches:
            self.dag.add_batch(b)
        p = Proposal(
            author=author,
            round=round_,
            batches=tuple(b.id for b in batches),
            parents=tuple(parents),
        )
        return p

    def fill_round(self, round_: int, batches_by_author: dict[int, list[Batch]] = None):
        """Author-ordered full round, every proposal linking the whole previous round."""
        batches_by_author = batches_by_author or {}
        out = []
        for a in range(self.n):
            p = self.propose(a, round_, batches_by_author.get(a, []))
            self.insert(p, [])
            out.append(p)
        return out


def find_seed(n: int, assignments: dict[int, int], limit: int = 100000) -> int:
    """A coin seed electing the given author per even round."""
    for seed in range(limit):
        if all(elect_leader(seed, r, n) == a for r, a in assignments.items()):
            return seed
    raise AssertionError("no seed found")


def random_dag_cluster(rng: random.Random, max_nodes=6, max_rounds=10, conflict_p=0.3):
    """A random well-formed DAG with conflicting transactions, insertion-ready.

    Returns (cluster, proposals in a topologically valid random order).
    """
    f = rng.randint(0, 1)
    n = rng.randint(max(2, 3 * f + 1), max_nodes)
    f = min(f, (n - 1) // 3)
    cluster = Cluster(n=n, f=f, seed=rng.randrange(1000))
    rounds = rng.randint(2, max_rounds)
    pool = [fresh_txo_id(i + 1000) for i in range(200)]
    rng.shuffle(pool)
    recent_refs: list[bytes] = []
    salt = 0
    proposals = []
    prev_round: list[Proposal] = []
    for r in range(rounds):
        # enough authors to satisfy the quorum of the next round
        authors = sorted(rng.sample(range(n), rng.randint(min(2 * f + 1, n), n)))
        if r == 0:
            authors = list(range(n))
        cur = []
        for a in authors:
            if r == 0:
                parents = []
            else:
                quorum = 2 * f + 1
                k = rng.randint(min(quorum, len(prev_round)), len(prev_round))
                chosen = rng.sample(prev_round, k)
                ids = {p.id for p in chosen}
                own = [p for p in prev_round if p.author == a]
                for p in own:
                    ids.add(p.id)
                parents = sorted(ids)
            batches = []
            if rng.random() < 0.8:
                txs = []
                spent_here = set()
                for _ in range(rng.randint(1, 3)):
                    if recent_refs and rng.random() < conflict_p:
                        ref = rng.choice(recent_refs)
                    else:
                        ref = pool.pop()
                    if ref in spent_here:
                        continue
                    spent_here.add(ref)
                    salt += 1
                    tx = tx_spending([ref], salt)
                    txs.append(tx)
                    recent_refs.append(ref)
                    if len(recent_refs) > 12:
                        recent_refs.pop(0)
                if txs:
                    batches.append(batch_of(txs))
            for b in batches:
                cluster.dag.add_batch(b)
            p = Proposal(
                author=a,
                round=r,
                batches=tuple(b.id for b in batches),
                parents=tuple(parents),
            )
            cur.append(p)
            proposals.append((p, batches))
        prev_round = cur
    return cluster, proposals
