"""Brute-force reference computations, independent of the incremental code.

Everything here recomputes from raw DAG structure: reachability by explicit
closure, votes by scanning every proposal's closure, conflicts by pairwise
input intersection, and commit outcomes by a direct reading of the
earliest-vote majority rule with order tie-breaks.
"""

from __future__ import annotations

from boardclerk.dag import DagStore, Proposal
from boardclerk.utxo import Transaction


def closure(dag: DagStore, root_id: bytes) -> set[bytes]:
    """Transitive parent closure including the root."""
    seen = set()
    stack = [root_id]
    while stack:
        pid = stack.pop()
        if pid in seen:
            continue
        seen.add(pid)
        stack.extend(dag.proposals[pid].parents)
    return seen


def closure_txs(dag: DagStore, pids: set[bytes]) -> list[Transaction]:
    txs = {}
    for pid in pids:
        for batch_id in dag.proposals[pid].batches:
            for tx in dag.get_batch(batch_id).txs:
                txs[tx.id] = tx
    return list(txs.values())


def recount_votes(dag: DagStore) -> dict[bytes, dict[int, int]]:
    """vote[tx][node] = lowest round of a node proposal whose closure holds tx."""
    votes: dict[bytes, dict[int, int]] = {}
    for p in dag.proposals.values():
        for tx in closure_txs(dag, closure(dag, p.id)):
            rec = votes.setdefault(tx.id, {})
            prev = rec.get(p.author)
            if prev is None or p.round < prev:
                rec[p.author] = p.round
    return votes


def pairwise_conflicts(txs: list[Transaction]) -> dict[bytes, set[bytes]]:
    """txo -> spender ids, restricted to outputs with two or more spenders."""
    spenders: dict[bytes, set[bytes]] = {}
    for tx in txs:
        for ref in tx.input_refs():
            spenders.setdefault(ref, set()).add(tx.id)
    return {txo: ids for txo, ids in spenders.items() if len(ids) >= 2}


def brute_frontier(dag: DagStore, root_id: bytes) -> dict[int, int]:
    fr: dict[int, int] = {}
    for pid in closure(dag, root_id):
        p = dag.proposals[pid]
        if p.round > fr.get(p.author, -1):
            fr[p.author] = p.round
    return fr


def resolve_epoch(
    dag: DagStore,
    epoch_proposals: list[Proposal],
    frontier: dict[int, int],
    votes: dict[bytes, dict[int, int]],
    committed: dict[bytes, str],
    spent: dict[bytes, bytes],
) -> tuple[set[bytes], set[bytes]]:
    """Direct reading of the commit rule over one emitted sub-DAG.

    committed maps already-decided tx ids to "success"/"failed"; spent maps
    an output id to the successful transaction that consumed it.
    """
    txs: list[Transaction] = []
    seen: set[bytes] = set()
    for p in epoch_proposals:
        for batch_id in p.batches:
            for tx in dag.get_batch(batch_id).txs:
                if tx.id not in seen:
                    seen.add(tx.id)
                    if tx.id not in committed:
                        txs.append(tx)

    st: set[bytes] = set()
    ft: set[bytes] = set()
    decided: set[bytes] = set()

    for tx in txs:
        if any(ref in spent for ref in tx.input_refs()):
            ft.add(tx.id)
            decided.add(tx.id)

    groups: dict[bytes, list[Transaction]] = {}
    for tx in txs:
        for ref in tx.input_refs():
            groups.setdefault(ref, []).append(tx)

    contested = {tx.id for g in groups.values() if len(g) >= 2 for tx in g}
    for tx in txs:
        if tx.id not in decided and tx.id not in contested:
            st.add(tx.id)

    def pruned(tx_id: bytes) -> dict[int, int]:
        return {
            node: r
            for node, r in votes.get(tx_id, {}).items()
            if r <= frontier.get(node, -1)
        }

    for txo in sorted(groups):
        members = groups[txo]
        if len(members) < 2:
            continue
        alive = [tx for tx in members if tx.id not in decided]
        if not alive:
            continue
        if len(alive) == 1:
            winner = alive[0]
        else:
            earliest: dict[int, int] = {}
            for tx in alive:
                for node, r in pruned(tx.id).items():
                    if node not in earliest or r < earliest[node]:
                        earliest[node] = r
            score = {
                tx.id: sum(1 for node, r in pruned(tx.id).items() if r == earliest[node])
                for tx in alive
            }
            winner = max(alive, key=lambda tx: (score[tx.id], tx.id))
        st.add(winner.id)
        decided.add(winner.id)
        for tx in alive:
            if tx.id != winner.id:
                ft.add(tx.id)
                decided.add(tx.id)
        for ref in sorted(winner.input_refs()):
            for other in groups.get(ref, []):
                if other.id not in decided:
                    ft.add(other.id)
                    decided.add(other.id)
    return st, ft
