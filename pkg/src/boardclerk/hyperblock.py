"""Hyper-blocks: committed-result witnesses and stateless proofs.

Every even-round proposal past the bootstrap carries witness commitments to
the batches it would commit and the transactions that would fail, computed by
simulating its own commitment against one or more possible previous leaders:

* blocking: a single entry against the decided previous leader (the proposer
  waits for that decision);
* non-blocking: one entry per candidate previous leader taken from the leader
  DAG, so no waiting is needed.

Receivers recompute each entry and attest to the witness root.  Once a
leader commits, any node assembles the hyper-block for its epoch: leadership
evidence (coin value plus f+1 supporting links), the realized witness entry
with its position proof, and at least 2f+1 attestations.  A client can then
check any transaction's outcome against the hyper-block alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .accumulator import (
    MembershipProof,
    NonMembershipProof,
    SetCommitment,
    commit_list,
    merkle_path,
    merkle_root,
    prove_membership,
    prove_non_membership,
    verify_membership,
    verify_non_membership,
    verify_path,
)
from .board import BoardState
from .clerk import Clerk, LeaderStatus, elect_leader
from .dag import GENESIS_ID, DagStore, Proposal, ProposalId
from .hashing import Reader, digest, enc_bytes, enc_list, enc_u32
from .utxo import TxId, TxResult

BLOCKING = "blocking"
NONBLOCKING = "nonblocking"
HYBRID = "hybrid"
OFF = "off"


class WitnessRejected(Exception):
    def __init__(self, entry_index: int, reason: str):
        super().__init__(f"witness entry {entry_index}: {reason}")
        self.entry_index = entry_index
        self.reason = reason


class HyperBlockUnavailable(Exception):
    pass


@dataclass(frozen=True)
class WitnessEntry:
    prev_leader: ProposalId
    wb: SetCommitment
    wf: SetCommitment

    def digest(self) -> bytes:
        return digest(
            enc_bytes(self.prev_leader)
            + enc_bytes(self.wb.root)
            + enc_u32(self.wb.size)
            + enc_bytes(self.wf.root)
            + enc_u32(self.wf.size)
        )


@dataclass(frozen=True)
class ProposalWitness:
    mode: str
    entries: tuple[WitnessEntry, ...]

    def root(self) -> bytes:
        return merkle_root([e.digest() for e in self.entries])

    def entry_path(self, index: int) -> tuple[tuple[bool, bytes], ...]:
        return tuple(merkle_path([e.digest() for e in self.entries], index))


@dataclass(frozen=True)
class Attestation:
    node: int
    proposal_id: ProposalId
    witness_root: bytes
    tag: bytes

    @classmethod
    def make(cls, node: int, proposal_id: ProposalId, witness_root: bytes) -> "Attestation":
        return cls(node, proposal_id, witness_root, cls.compute_tag(node, proposal_id, witness_root))

    @staticmethod
    def compute_tag(node: int, proposal_id: ProposalId, witness_root: bytes) -> bytes:
        return digest(b"attest" + enc_u32(node) + enc_bytes(proposal_id) + enc_bytes(witness_root))

    def verify(self) -> bool:
        return self.tag == self.compute_tag(self.node, self.proposal_id, self.witness_root)


@dataclass(frozen=True)
class Leadership:
    leader_id: ProposalId
    round: int
    coin_author: int
    supporters: tuple[ProposalId, ...]


@dataclass(frozen=True)
class HyperBlock:
    leadership: Leadership
    wb: SetCommitment
    wf: SetCommitment
    prev_leader: ProposalId
    witness_root: bytes
    entry_count: int
    entry_index: int
    entry_path: tuple[tuple[bool, bytes], ...]
    endorsements: tuple[Attestation, ...]

    def to_bytes(self) -> bytes:
        lead = (
            enc_bytes(self.leadership.leader_id)
            + enc_u32(self.leadership.round)
            + enc_u32(self.leadership.coin_author)
            + enc_list([enc_bytes(s) for s in self.leadership.supporters])
        )
        body = (
            lead
            + enc_bytes(self.wb.root)
            + enc_u32(self.wb.size)
            + enc_bytes(self.wf.root)
            + enc_u32(self.wf.size)
            + enc_bytes(self.prev_leader)
            + enc_bytes(self.witness_root)
            + enc_u32(self.entry_count)
            + enc_u32(self.entry_index)
            + _enc_path(self.entry_path)
            + enc_list(
                [
                    enc_u32(a.node) + enc_bytes(a.proposal_id) + enc_bytes(a.witness_root) + enc_bytes(a.tag)
                    for a in self.endorsements
                ]
            )
        )
        return body

    @classmethod
    def from_bytes(cls, data: bytes) -> "HyperBlock":
        r = Reader(data)
        leader_id = r.bytes_()
        round_ = r.u32()
        coin_author = r.u32()
        supporters = tuple(r.bytes_() for _ in range(r.count()))
        wb = SetCommitment(r.bytes_(), r.u32())
        wf = SetCommitment(r.bytes_(), r.u32())
        prev_leader = r.bytes_()
        witness_root = r.bytes_()
        entry_count = r.u32()
        entry_index = r.u32()
        entry_path = _dec_path(r)
        endorsements = tuple(
            Attestation(r.u32(), r.bytes_(), r.bytes_(), r.bytes_()) for _ in range(r.count())
        )
        r.expect_done()
        return cls(
            Leadership(leader_id, round_, coin_author, supporters),
            wb,
            wf,
            prev_leader,
            witness_root,
            entry_count,
            entry_index,
            entry_path,
            endorsements,
        )


def _enc_path(path: tuple[tuple[bool, bytes], ...]) -> bytes:
    return enc_list([enc_u32(1 if is_right else 0) + enc_bytes(h) for is_right, h in path])


def _dec_path(r: Reader) -> tuple[tuple[bool, bytes], ...]:
    return tuple((r.u32() == 1, r.bytes_()) for _ in range(r.count()))


def _enc_membership(p: MembershipProof) -> bytes:
    return enc_bytes(p.element) + enc_u32(p.index) + _enc_path(p.path)


def _dec_membership(r: Reader) -> MembershipProof:
    return MembershipProof(r.bytes_(), r.u32(), _dec_path(r))


@dataclass(frozen=True)
class TxResultProof:
    tx_id: TxId
    batch_id: bytes
    batch_size: int
    tx_index: int
    tx_path: tuple[tuple[bool, bytes], ...]
    batch_membership: MembershipProof
    result_member: Optional[MembershipProof]
    result_non_member: Optional[NonMembershipProof]
    leadership: Leadership
    entry_index: int

    def to_bytes(self) -> bytes:
        if self.result_member is not None:
            result = b"\x01" + _enc_membership(self.result_member)
        else:
            nm = self.result_non_member
            result = b"\x00"
            result += (b"\x01" + _enc_membership(nm.left)) if nm.left else b"\x00"
            result += (b"\x01" + _enc_membership(nm.right)) if nm.right else b"\x00"
        lead = (
            enc_bytes(self.leadership.leader_id)
            + enc_u32(self.leadership.round)
            + enc_u32(self.leadership.coin_author)
            + enc_list([enc_bytes(s) for s in self.leadership.supporters])
        )
        return (
            enc_bytes(self.tx_id)
            + enc_bytes(self.batch_id)
            + enc_u32(self.batch_size)
            + enc_u32(self.tx_index)
            + _enc_path(self.tx_path)
            + _enc_membership(self.batch_membership)
            + result
            + lead
            + enc_u32(self.entry_index)
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "TxResultProof":
        r = Reader(data)
        tx_id = r.bytes_()
        batch_id = r.bytes_()
        batch_size = r.u32()
        tx_index = r.u32()
        tx_path = _dec_path(r)
        batch_membership = _dec_membership(r)
        kind = r.take(1)
        member = None
        non_member = None
        if kind == b"\x01":
            member = _dec_membership(r)
        else:
            left = _dec_membership(r) if r.take(1) == b"\x01" else None
            right = _dec_membership(r) if r.take(1) == b"\x01" else None
            non_member = NonMembershipProof(left, right)
        leader_id = r.bytes_()
        round_ = r.u32()
        coin_author = r.u32()
        supporters = tuple(r.bytes_() for _ in range(r.count()))
        entry_index = r.u32()
        r.expect_done()
        return cls(
            tx_id,
            batch_id,
            batch_size,
            tx_index,
            tx_path,
            batch_membership,
            member,
            non_member,
            Leadership(leader_id, round_, coin_author, supporters),
            entry_index,
        )


class LeaderDag:
    """Even-round proposals with their witness vectors.

    Mirrors the DAG restricted to even rounds: two vertices are connected
    exactly when they are connected in the proposal DAG, which candidate
    enumeration checks through ancestry masks.  Once a round is decided, the
    losing vertices of that round are pruned.
    """

    def __init__(self, dag: DagStore, clerk: Clerk, n: int):
        self.dag = dag
        self.clerk = clerk
        self.n = n
        self.vertices: dict[int, list[ProposalId]] = {}
        self.vectors: dict[ProposalId, ProposalWitness] = {}

    def add(self, p: Proposal, witness: Optional[ProposalWitness]) -> None:
        if p.round % 2 != 0:
            return
        level = self.vertices.setdefault(p.round, [])
        if p.id not in level:
            level.append(p.id)
            level.sort(key=lambda pid: self.dag.proposals[pid].author)
        if witness is not None:
            self.vectors[p.id] = witness

    def prune_decided(self, round_: int, winner: Optional[ProposalId]) -> None:
        level = self.vertices.get(round_, [])
        for pid in level:
            if pid != winner:
                self.vectors.pop(pid, None)
        self.vertices[round_] = [pid for pid in level if pid == winner]

    def _in_mask(self, pid: ProposalId, mask: int) -> bool:
        bit = self.dag._bit.get(pid)
        return bit is not None and bool(mask >> bit & 1)

    def _settled_leader(self, round_: int, mask: int) -> Optional[ProposalId]:
        """The elected proposal of an even round, when the ancestry itself
        proves it committed: present plus f+1 supporting links, all inside
        the mask."""
        author = self.clerk.elect(round_)
        pid = self.dag.by_author_round.get((author, round_))
        if pid is None or not self._in_mask(pid, mask):
            return None
        support = sum(
            1
            for q in self.dag.by_round.get(round_ + 1, [])
            if pid in q.parents and self._in_mask(q.id, mask)
        )
        return pid if support >= self.clerk.f + 1 else None

    def candidates(self, round_: int, within_mask: int) -> list[ProposalId]:
        """Possible previous committed leaders for a proposal whose ancestry
        is within_mask, newest round first, authors ascending inside a round.

        A pure function of the ancestry and the public coin, so proposer and
        verifiers always enumerate identically.  A settled round contributes
        its leader and stops the walk; an unsettled round contributes every
        reachable proposal and, unless the level is complete (all n authors),
        the walk recurses.  The genesis sentinel closes any remaining gap.
        """
        out: list[ProposalId] = []
        r = round_
        while r >= 4:
            settled = self._settled_leader(r, within_mask)
            if settled is not None:
                out.append(settled)
                return out
            level = [
                p.id
                for p in self.dag.by_round.get(r, [])
                if self._in_mask(p.id, within_mask)
            ]
            out.extend(level)
            if len(level) == self.n:
                return out
            r -= 2
        out.append(GENESIS_ID)
        return out


class HyperblockEngine:
    """Per-node driver for witness creation, verification, and assembly."""

    def __init__(
        self,
        node: int,
        n: int,
        f: int,
        seed: int,
        dag: DagStore,
        board: BoardState,
        clerk: Clerk,
        mode: str = OFF,
        max_witness_paths: int = 0,
        hybrid_conflict_threshold: int = 16,
    ):
        self.node = node
        self.n = n
        self.f = f
        self.seed = seed
        self.dag = dag
        self.board = board
        self.clerk = clerk
        self.mode = mode
        self.max_witness_paths = max_witness_paths or (2 * f + 2)
        self.hybrid_conflict_threshold = hybrid_conflict_threshold
        self.leader_dag = LeaderDag(dag, clerk, n)

    # -- proposing -------------------------------------------------------------

    def needs_witness(self, round_: int) -> bool:
        return self.mode != OFF and round_ % 2 == 0 and round_ > 4

    def effective_mode(self, round_: int) -> str:
        if self.mode == HYBRID:
            live_conflicts = len(self.board.conflicted)
            return BLOCKING if live_conflicts > self.hybrid_conflict_threshold else NONBLOCKING
        return self.mode

    def take_leader(self, draft_mask: int, round_: int) -> ProposalId:
        """Leader the blocking flow simulates against.

        The election for round r-2 has already fired by the time a round-r
        proposal can exist, so the await resolves immediately; when the
        elected proposal is outside the draft's ancestry the walk recurses to
        the latest elected leader inside it, bottoming out at genesis.  This
        is exactly the previously committed leader if the draft itself ends
        up leading.
        """
        return self.board.chain_prev(draft_mask, round_)

    def build_witness(
        self,
        author: int,
        round_: int,
        batches: tuple[bytes, ...],
        parents: tuple[ProposalId, ...],
    ) -> ProposalWitness:
        """Witness for a draft proposal."""
        draft_mask = self.dag.draft_mask(parents)
        mode = self.effective_mode(round_)

        def entry_for(prev: ProposalId) -> WitnessEntry:
            b, ftxs = self.board.simulate_commit(
                prev,
                draft_author=author,
                draft_round=round_,
                draft_batches=batches,
                draft_parents=parents,
            )
            return WitnessEntry(prev, commit_list(b), commit_list(ftxs))

        if mode == NONBLOCKING:
            cands = self.leader_dag.candidates(round_ - 2, draft_mask)
            if len(cands) <= self.max_witness_paths:
                return ProposalWitness(NONBLOCKING, tuple(entry_for(c) for c in cands))
            # Vector too long: cool down with the blocking flow.
        return ProposalWitness(BLOCKING, (entry_for(self.take_leader(draft_mask, round_)),))

    # -- receiving ---------------------------------------------------------------

    def on_insert(self, p: Proposal) -> Optional[Attestation]:
        """Track even-round proposals; verify and attest witnessed ones."""
        if p.round % 2 == 0:
            witness = p.witness if isinstance(p.witness, ProposalWitness) else None
            self.leader_dag.add(p, witness)
        self._prune_decided_rounds()
        if self.needs_witness(p.round):
            return self.verify_proposal(p)
        return None

    def _prune_decided_rounds(self) -> None:
        for round_ in list(self.leader_dag.vertices):
            rec = self.clerk.records.get(round_)
            if rec is None or rec.status is LeaderStatus.PENDING:
                continue
            if len(self.leader_dag.vertices.get(round_, [])) > 1 or rec.proposal_id is None:
                self.leader_dag.prune_decided(round_, rec.proposal_id)

    def verify_proposal(self, p: Proposal) -> Attestation:
        """Recompute every witness entry; attest on full agreement."""
        w = p.witness
        if not isinstance(w, ProposalWitness) or not w.entries:
            raise WitnessRejected(0, "missing witness")
        draft_mask = self.dag.draft_mask(p.parents)
        claimed = [e.prev_leader for e in w.entries]
        if w.mode == NONBLOCKING:
            expected = self.leader_dag.candidates(p.round - 2, draft_mask)
            if len(expected) <= self.max_witness_paths and claimed != expected:
                missing = [c for c in expected if c not in claimed]
                if missing:
                    raise WitnessRejected(
                        min(expected.index(missing[0]), len(w.entries) - 1),
                        "missing candidate path",
                    )
                raise WitnessRejected(0, "candidate order mismatch")
        for idx, entry in enumerate(w.entries):
            prev = entry.prev_leader
            if prev != GENESIS_ID:
                if prev not in self.dag.proposals:
                    raise WitnessRejected(idx, "unknown previous leader")
                bit = self.dag._bit[prev]
                if not draft_mask >> bit & 1:
                    raise WitnessRejected(idx, "previous leader not an ancestor")
            b, ftxs = self.board.simulate_commit(prev, proposal=p)
            if commit_list(b) != entry.wb or commit_list(ftxs) != entry.wf:
                raise WitnessRejected(idx, "commitment mismatch")
        return Attestation.make(self.node, p.id, w.root())

    # -- assembly ------------------------------------------------------------------

    def assemble_hyperblock(
        self, leader_id: ProposalId, attestations: dict[int, Attestation]
    ) -> HyperBlock:
        leader = self.dag.proposals.get(leader_id)
        if leader is None:
            raise HyperBlockUnavailable("leader unknown")
        prev = self.clerk.previous_committed(leader_id)
        if prev is None:
            raise HyperBlockUnavailable("leader not committed")
        w = leader.witness
        if not isinstance(w, ProposalWitness):
            raise HyperBlockUnavailable("leader carries no witness")
        entry_index = None
        for idx, entry in enumerate(w.entries):
            if entry.prev_leader == prev:
                entry_index = idx
                break
        if entry_index is None:
            raise HyperBlockUnavailable("no witness entry for the realized previous leader")
        entry = w.entries[entry_index]
        root = w.root()

        # Direct next-round links first; a chain-committed leader may lack
        # f+1 of them, in which case later proposals that reach it
        # transitively supply the remaining supporting links.
        supporters_list = [
            q.id
            for q in self.dag.by_round.get(leader.round + 1, [])
            if leader_id in q.parents
        ]
        r = leader.round + 2
        while len(supporters_list) < self.f + 1 and r <= self.dag.max_round():
            for q in self.dag.by_round.get(r, []):
                if len(supporters_list) >= self.f + 1:
                    break
                if self.dag.reaches(q.id, leader_id):
                    supporters_list.append(q.id)
            r += 1
        supporters = tuple(supporters_list[: self.f + 1])
        if len(supporters) < self.f + 1:
            raise HyperBlockUnavailable("insufficient link support")

        valid = sorted(
            (a for a in attestations.values() if a.witness_root == root and a.verify()),
            key=lambda a: a.node,
        )
        if len(valid) < 2 * self.f + 1:
            raise HyperBlockUnavailable("insufficient endorsements")

        return HyperBlock(
            leadership=Leadership(
                leader_id=leader_id,
                round=leader.round,
                coin_author=self.clerk.elect(leader.round),
                supporters=supporters,
            ),
            wb=entry.wb,
            wf=entry.wf,
            prev_leader=prev,
            witness_root=root,
            entry_count=len(w.entries),
            entry_index=entry_index,
            entry_path=w.entry_path(entry_index),
            endorsements=tuple(valid[: 2 * self.f + 1]),
        )

    def epoch_data(self, leader_id: ProposalId) -> tuple[list[bytes], set[TxId]]:
        """Realized (batches, failed set) for a committed leader's epoch."""
        prev = self.clerk.previous_committed(leader_id)
        if prev is None:
            raise HyperBlockUnavailable("leader not committed")
        return self.board.simulate_commit(prev, proposal=self.dag.proposals[leader_id])

    def build_tx_proof(self, hb: HyperBlock, tx_id: TxId) -> TxResultProof:
        batches, failed = self.epoch_data(hb.leadership.leader_id)
        for batch_id in batches:
            batch = self.dag.get_batch(batch_id)
            ids = batch.tx_ids()
            if tx_id in ids:
                tx_index = ids.index(tx_id)
                member = None
                non_member = None
                if tx_id in failed:
                    member = prove_membership(failed, tx_id)
                else:
                    non_member = prove_non_membership(failed, tx_id)
                return TxResultProof(
                    tx_id=tx_id,
                    batch_id=batch_id,
                    batch_size=len(ids),
                    tx_index=tx_index,
                    tx_path=tuple(merkle_path(ids, tx_index)),
                    batch_membership=prove_membership(batches, batch_id),
                    result_member=member,
                    result_non_member=non_member,
                    leadership=hb.leadership,
                    entry_index=hb.entry_index,
                )
        raise HyperBlockUnavailable("transaction not in the leader's epoch")


def verify_tx_result(
    proof: TxResultProof, hb: HyperBlock, tx_id: TxId, n: int, f: int, seed: int
) -> Optional[TxResult]:
    """Stateless check of a transaction's outcome; None means invalid."""
    lead = hb.leadership
    if proof.tx_id != tx_id or proof.leadership != lead or proof.entry_index != hb.entry_index:
        return None
    # Leadership: coin recomputation, f+1 distinct supporters, 2f+1 endorsements.
    try:
        expected_author = elect_leader(seed, lead.round, n)
    except ValueError:
        return None
    if lead.coin_author != expected_author:
        return None
    if len(set(lead.supporters)) < f + 1 or len(lead.supporters) != len(set(lead.supporters)):
        return None
    nodes = {a.node for a in hb.endorsements}
    if len(nodes) < 2 * f + 1 or len(nodes) != len(hb.endorsements):
        return None
    for a in hb.endorsements:
        if a.proposal_id != lead.leader_id or a.witness_root != hb.witness_root:
            return None
        if not a.verify() or not 0 <= a.node < n:
            return None
    # The endorsed witness root must contain the realized (prev, wb, wf) entry.
    entry = WitnessEntry(hb.prev_leader, hb.wb, hb.wf)
    if not verify_path(
        entry.digest(), hb.entry_index, list(hb.entry_path), hb.witness_root, hb.entry_count
    ):
        return None
    # Block membership: the batch under wb, the transaction inside the batch.
    if proof.batch_membership.element != proof.batch_id:
        return None
    if not verify_membership(proof.batch_membership, hb.wb):
        return None
    if not verify_path(tx_id, proof.tx_index, list(proof.tx_path), proof.batch_id, proof.batch_size):
        return None
    # Result: membership in the failed set means failure, non-membership success.
    if (proof.result_member is None) == (proof.result_non_member is None):
        return None
    if proof.result_member is not None:
        if proof.result_member.element != tx_id:
            return None
        if not verify_membership(proof.result_member, hb.wf):
            return None
        return TxResult.FAILED
    if not verify_non_membership(proof.result_non_member, hb.wf, tx_id):
        return None
    return TxResult.SUCCESS
