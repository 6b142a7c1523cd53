"""Per-node round-based DAG of proposals.

Proposals are inserted parents-first; a proposal whose parents are unknown is
deferred for re-submission rather than rejected.  Ancestry is tracked as a
bitmask per proposal (one bit per stored proposal), which makes sub-DAG
extraction, reachability checks, and frontier computation cheap and exactly
order-insensitive.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .hashing import digest, enc_bytes, enc_list, enc_u32
from .utxo import Batch

ProposalId = bytes

# Sentinel for "no leader committed yet": the empty sub-DAG.
GENESIS_ID: ProposalId = b"\x00" * 32


def compute_proposal_id(
    author: int, round_: int, batch_ids: Iterable[bytes], parent_ids: Iterable[ProposalId]
) -> ProposalId:
    """Digest of (author, round, batch ids, parent ids); witness excluded."""
    body = (
        enc_u32(author)
        + enc_u32(round_)
        + enc_list([enc_bytes(b) for b in batch_ids])
        + enc_list([enc_bytes(p) for p in sorted(parent_ids)])
    )
    return digest(body)


@dataclass
class Proposal:
    author: int
    round: int
    batches: tuple[bytes, ...]
    parents: tuple[ProposalId, ...]
    witness: Optional[object] = field(default=None, compare=False)
    id: ProposalId = b""

    def __post_init__(self):
        self.parents = tuple(sorted(self.parents))
        if not self.id:
            self.id = compute_proposal_id(self.author, self.round, self.batches, self.parents)


class AddResult(Enum):
    ACCEPTED = "accepted"
    DEFERRED = "deferred"
    REJECTED = "rejected"


Frontier = dict[int, int]


class DagStore:
    def __init__(self, n: int, f: int):
        self.n = n
        self.f = f
        self.proposals: dict[ProposalId, Proposal] = {}
        self.by_round: dict[int, list[Proposal]] = {}
        self.by_author_round: dict[tuple[int, int], ProposalId] = {}
        self.committed: set[ProposalId] = set()
        self.batch_store: dict[bytes, Batch] = {}
        # Bit position per proposal and inclusive-ancestor masks.
        self._bit: dict[ProposalId, int] = {}
        self._by_bit: list[ProposalId] = []
        self._mask: dict[ProposalId, int] = {}
        self._committed_mask: int = 0

    # -- batches ------------------------------------------------------------

    def add_batch(self, batch: Batch) -> None:
        self.batch_store[batch.id] = batch

    def get_batch(self, batch_id: bytes) -> Batch | None:
        return self.batch_store.get(batch_id)

    # -- insertion ----------------------------------------------------------

    def add_proposal(self, p: Proposal) -> AddResult:
        if p.id in self.proposals:
            return AddResult.ACCEPTED  # idempotent, no state change
        if not 0 <= p.author < self.n:
            return AddResult.REJECTED
        if p.round == 0:
            if p.parents:
                return AddResult.REJECTED
        else:
            if len(p.parents) < 2 * self.f + 1:
                return AddResult.REJECTED
            known = [self.proposals.get(pid) for pid in p.parents]
            if any(k is None for k in known):
                return AddResult.DEFERRED
            if any(k.round != p.round - 1 for k in known):
                return AddResult.REJECTED
            own_prev = self.by_author_round.get((p.author, p.round - 1))
            if own_prev is not None and own_prev not in p.parents:
                return AddResult.REJECTED
        if (p.author, p.round) in self.by_author_round:
            return AddResult.REJECTED  # equivocation: same slot, different id
        self._store(p)
        return AddResult.ACCEPTED

    def _store(self, p: Proposal) -> None:
        bit = len(self._by_bit)
        self._bit[p.id] = bit
        self._by_bit.append(p.id)
        mask = 1 << bit
        for pid in p.parents:
            mask |= self._mask[pid]
        self._mask[p.id] = mask
        self.proposals[p.id] = p
        self.by_round.setdefault(p.round, []).append(p)
        self.by_round[p.round].sort(key=lambda q: q.author)
        self.by_author_round[(p.author, p.round)] = p.id

    # -- ancestry -----------------------------------------------------------

    def ancestry_mask(self, root: ProposalId) -> int:
        """Inclusive ancestor mask; the genesis sentinel has no ancestry."""
        if root == GENESIS_ID:
            return 0
        return self._mask[root]

    def draft_mask(self, parents: Iterable[ProposalId]) -> int:
        """Ancestry of a not-yet-inserted proposal, excluding itself."""
        mask = 0
        for pid in parents:
            mask |= self._mask[pid]
        return mask

    def reaches(self, ancestor_of: ProposalId, target: ProposalId) -> bool:
        """True iff target is in the inclusive ancestry of ancestor_of."""
        bit = self._bit.get(target)
        if bit is None:
            return False
        return bool(self._mask[ancestor_of] >> bit & 1)

    def _mask_to_proposals(self, mask: int) -> list[Proposal]:
        out = []
        while mask:
            low = mask & -mask
            out.append(self.proposals[self._by_bit[low.bit_length() - 1]])
            mask ^= low
        return out

    def proposals_in_mask(self, mask: int) -> list[Proposal]:
        """Proposals in a mask ordered by (round asc, author asc)."""
        found = self._mask_to_proposals(mask)
        found.sort(key=lambda p: (p.round, p.author))
        return found

    # -- queries ------------------------------------------------------------

    def sub_dag(self, root: ProposalId, exclude: set[ProposalId] | None = None) -> list[Proposal]:
        """All proposals reachable from root, minus exclude, in canonical order."""
        if root not in self.proposals:
            raise KeyError(f"unknown root {root.hex()}")
        mask = self._mask[root]
        if exclude:
            for pid in exclude:
                bit = self._bit.get(pid)
                if bit is not None:
                    mask &= ~(1 << bit)
        return self.proposals_in_mask(mask)

    def sub_dag_mask(self, root_mask: int, exclude_mask: int = 0) -> int:
        return root_mask & ~exclude_mask

    def frontier(self, root: ProposalId) -> Frontier:
        """Per author, the highest round of that author's proposals under root."""
        if root not in self.proposals:
            raise KeyError(f"unknown root {root.hex()}")
        return self.frontier_of_mask(self._mask[root])

    def frontier_of_mask(self, mask: int) -> Frontier:
        fr: Frontier = {}
        for p in self._mask_to_proposals(mask):
            cur = fr.get(p.author, -1)
            if p.round > cur:
                fr[p.author] = p.round
        return fr

    def link_support(self, leader: ProposalId) -> int:
        """Count of stored round r+1 proposals whose parents include leader."""
        lp = self.proposals.get(leader)
        if lp is None:
            raise KeyError(f"unknown proposal {leader.hex()}")
        return sum(1 for q in self.by_round.get(lp.round + 1, []) if leader in q.parents)

    # -- commitment bookkeeping ----------------------------------------------

    def mark_committed(self, pids: Iterable[ProposalId]) -> None:
        for pid in pids:
            if pid not in self.committed:
                self.committed.add(pid)
                self._committed_mask |= 1 << self._bit[pid]

    @property
    def committed_mask(self) -> int:
        return self._committed_mask

    def max_round(self) -> int:
        return max(self.by_round) if self.by_round else -1

    # -- debugging ------------------------------------------------------------

    def export_edges(self) -> str:
        """Text edge list, one "round author -> parent_round parent_author" per line."""
        lines = []
        for r in sorted(self.by_round):
            for p in self.by_round[r]:
                if not p.parents:
                    lines.append(f"{p.round} {p.author} ->")
                for pid in p.parents:
                    q = self.proposals[pid]
                    lines.append(f"{p.round} {p.author} -> {q.round} {q.author}")
        return "\n".join(lines)
