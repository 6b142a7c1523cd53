"""Leader election and formal commitment of leader sub-DAGs.

A leader is elected for every even round from a shared seeded coin.  When an
odd-round proposal is inserted, the previous round's elected leader is
checked: once at least f+1 stored proposals of the next round link it, the
leader commits.  Committing a leader first settles every undecided earlier
even round by the chain rule (an elected proposal inside the new leader's
ancestry commits first, anything else is skipped permanently), then emits
each committed leader's uncommitted sub-DAG to the board in ascending round
order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .board import BoardState, CommitOutcome
from .dag import DagStore, Proposal, ProposalId
from .hashing import digest, enc_u64


def elect_leader(seed: int, round_: int, n: int) -> int:
    """Deterministic coin: the author index leading an even round."""
    if round_ % 2 != 0:
        raise ValueError(f"leader rounds are even, got {round_}")
    if round_ < 4:
        raise ValueError(f"leader rounds start at 4, got {round_}")
    raw = digest(enc_u64(seed) + enc_u64(round_))
    return int.from_bytes(raw[:8], "big") % n


class LeaderStatus(Enum):
    PENDING = "pending"
    COMMITTED = "committed"
    SKIPPED = "skipped"


@dataclass
class LeaderRecord:
    round: int
    author: int
    status: LeaderStatus = LeaderStatus.PENDING
    proposal_id: Optional[ProposalId] = None
    decided_time: Optional[float] = None


@dataclass(frozen=True)
class CommitEmission:
    leader: ProposalId
    round: int
    outcome: CommitOutcome
    time: float
    trigger_round: int


class Clerk:
    def __init__(self, n: int, f: int, seed: int, dag: DagStore, board: BoardState):
        self.n = n
        self.f = f
        self.seed = seed
        self.dag = dag
        self.board = board
        self.records: dict[int, LeaderRecord] = {}
        self._committed_seq: list[LeaderRecord] = []
        self._triggered_rounds: set[int] = set()
        self.decision_log: list[tuple[int, int, str, float]] = []
        self.emissions: list[CommitEmission] = []

    def elect(self, round_: int) -> int:
        return elect_leader(self.seed, round_, self.n)

    def record_for(self, round_: int) -> LeaderRecord:
        rec = self.records.get(round_)
        if rec is None:
            rec = LeaderRecord(round=round_, author=self.elect(round_))
            self.records[round_] = rec
        return rec

    def on_insert(self, p: Proposal, now: float = 0.0) -> list[CommitEmission]:
        """Advance leader decisions when a new odd round opens locally.

        The first proposal of odd round r elects the leader of round r-1 and
        re-examines every still-pending earlier leader in ascending order;
        any of them whose proposal has gathered f+1 next-round links commits
        (typically the leader two rounds back, whose support round is now
        fully delivered).  Insufficient support keeps a leader pending until
        a later leader's sub-DAG includes it or forever excludes it.
        """
        if p.round % 2 == 0 or p.round < 5:
            return []
        if p.round in self._triggered_rounds:
            return []
        self._triggered_rounds.add(p.round)
        out: list[CommitEmission] = []
        for r in range(4, p.round, 2):
            rec = self.record_for(r)
            if rec.status is not LeaderStatus.PENDING:
                continue
            pid = self.dag.by_author_round.get((rec.author, r))
            if pid is not None and self.dag.link_support(pid) >= self.f + 1:
                out.extend(self._commit_chain(pid, now, trigger_round=p.round))
        return out

    def _commit_chain(
        self, leader_pid: ProposalId, now: float, trigger_round: int
    ) -> list[CommitEmission]:
        chain = [leader_pid]
        head = leader_pid
        r = self.dag.proposals[leader_pid].round - 2
        while r >= 4:
            rec = self.record_for(r)
            if rec.status is not LeaderStatus.PENDING:
                break
            cand = self.dag.by_author_round.get((rec.author, r))
            if cand is not None and self.dag.reaches(head, cand):
                chain.append(cand)
                head = cand
            else:
                rec.status = LeaderStatus.SKIPPED
                rec.decided_time = now
                self.decision_log.append((r, rec.author, rec.status.value, now))
            r -= 2

        out = []
        for pid in reversed(chain):
            lp = self.dag.proposals[pid]
            ps = self.dag.sub_dag(pid, self.dag.committed)
            frontier = self.dag.frontier(pid)
            outcome = self.board.commit(ps, frontier, now, trigger_round)
            self.dag.mark_committed([q.id for q in ps])
            rec = self.record_for(lp.round)
            rec.status = LeaderStatus.COMMITTED
            rec.proposal_id = pid
            rec.decided_time = now
            self._committed_seq.append(rec)
            self.decision_log.append((lp.round, rec.author, rec.status.value, now))
            emission = CommitEmission(
                leader=pid, round=lp.round, outcome=outcome, time=now, trigger_round=trigger_round
            )
            self.emissions.append(emission)
            out.append(emission)
        return out

    def committed_sequence(self) -> list[LeaderRecord]:
        return list(self._committed_seq)

    def last_committed_leader(self) -> Optional[ProposalId]:
        return self._committed_seq[-1].proposal_id if self._committed_seq else None

    def previous_committed(self, leader_pid: ProposalId) -> Optional[ProposalId]:
        """The committed leader immediately before leader_pid, if committed."""
        from .dag import GENESIS_ID

        prev = GENESIS_ID
        for rec in self._committed_seq:
            if rec.proposal_id == leader_pid:
                return prev
            prev = rec.proposal_id
        return None
