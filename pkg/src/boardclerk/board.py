"""Vote accounting, fast commits, and sub-DAG result resolution.

The board derives, from the local DAG alone, which node voted for which
transaction at which round (a node votes at round r when its round-r proposal
is the first of its proposals whose sub-DAG contains the transaction).  Votes
feed two channels:

* the fast channel: at odd rounds, a transaction with strictly more than
  2f+1 distinct voters and no conflicting transaction observed anywhere in
  the local DAG is fast-committed as successful ahead of formal commitment;
* formal commitment: when a leader's uncommitted sub-DAG is emitted, every
  transaction in it resolves to success or failure.  Conflict groups are
  settled by frontier-pruned earliest-vote counts with the deterministic
  transaction order breaking ties.

Formal outcomes are a pure function of the DAG and the election coin, so all
honest nodes agree; the fast channel is node-local bookkeeping whose
predictions the formal path must confirm (a contradiction is a fatal
protocol violation).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .dag import GENESIS_ID, DagStore, Frontier, Proposal, ProposalId
from .utxo import Transaction, TxId, TxoId, TxPhase, TxResult


class ProtocolViolation(Exception):
    """A fast-committed result contradicted by formal commitment."""


class UnresolvedBatchError(Exception):
    """A proposal references a batch payload the node does not hold yet."""


@dataclass(frozen=True)
class CommitOutcome:
    st: tuple[TxId, ...]
    ft: tuple[TxId, ...]


@dataclass(frozen=True)
class TxEvent:
    tx_id: TxId
    phase: TxPhase
    result: Optional[TxResult]
    time: float
    round: int


class _ChainFrame:
    """Committed results of one leader's epoch, chained to its predecessor."""

    __slots__ = ("committed", "spent", "parent")

    def __init__(self, committed: dict[TxId, TxResult], spent: dict[TxoId, TxId], parent):
        self.committed = committed
        self.spent = spent
        self.parent = parent

    def committed_result(self, tx_id: TxId) -> Optional[TxResult]:
        frame = self
        while frame is not None:
            r = frame.committed.get(tx_id)
            if r is not None:
                return r
            frame = frame.parent
        return None

    def spent_by(self, txo: TxoId) -> Optional[TxId]:
        frame = self
        while frame is not None:
            t = frame.spent.get(txo)
            if t is not None:
                return t
            frame = frame.parent
        return None


_EMPTY_FRAME = _ChainFrame({}, {}, None)


class _LiveView:
    """Committed-state view for the real commit path."""

    __slots__ = ("board",)

    def __init__(self, board: "BoardState"):
        self.board = board

    def committed_result(self, tx_id: TxId) -> Optional[TxResult]:
        return self.board.committed.get(tx_id)

    def spent_by(self, txo: TxoId) -> Optional[TxId]:
        return self.board.committed_spent.get(txo)


class BoardState:
    def __init__(
        self,
        n: int,
        f: int,
        dag: DagStore,
        coin: Callable[[int], int] | None = None,
        listener: Callable[[TxEvent], None] | None = None,
    ):
        self.n = n
        self.f = f
        self.dag = dag
        self.coin = coin
        self.listener = listener
        # Strictly more than 2f+1 voters are required on the fast channel.
        self.fast_vote_threshold = 2 * f + 2

        self.tx_votes: dict[TxId, dict[int, int]] = {}
        self.batch_votes: dict[bytes, dict[int, int]] = {}
        self.txo_spenders: dict[TxoId, set[TxId]] = {}
        self.conflicted: set[TxId] = set()
        self.fast: dict[TxId, TxResult] = {}
        self.committed: dict[TxId, TxResult] = {}
        self.committed_spent: dict[TxoId, TxId] = {}
        self.seen_batches: set[bytes] = set()
        self.tx_inputs: dict[TxId, frozenset[TxoId]] = {}
        self.event_log: list[TxEvent] = []

        self._vote_count: dict[TxId, int] = {}
        self._fast_candidates: set[TxId] = set()
        self._touched: set[TxId] = set()
        self._covered: dict[ProposalId, set[int]] = {}
        self._chain_frames: dict[ProposalId, _ChainFrame] = {}

    # -- event plumbing -------------------------------------------------------

    def _emit(self, tx_id: TxId, phase: TxPhase, result: Optional[TxResult], now: float, round_: int) -> None:
        ev = TxEvent(tx_id, phase, result, now, round_)
        self.event_log.append(ev)
        if self.listener is not None:
            self.listener(ev)

    def _mark_fast(self, tx_id: TxId, result: TxResult, now: float, round_: int) -> None:
        if tx_id in self.fast or tx_id in self.committed:
            return
        self.fast[tx_id] = result
        self._fast_candidates.discard(tx_id)
        self._emit(tx_id, TxPhase.FAST_COMMITTED, result, now, round_)

    # -- vote counting (Board.Process) -----------------------------------------

    def process(self, p: Proposal, now: float = 0.0) -> list[tuple[TxId, TxResult]]:
        """Count votes contributed by proposal p; fast-commit on odd rounds.

        Idempotent: re-processing an already-covered proposal changes nothing.
        """
        for batch_id in p.batches:
            if self.dag.get_batch(batch_id) is None:
                raise UnresolvedBatchError(batch_id.hex())
        for batch_id in p.batches:
            if batch_id not in self.seen_batches:
                self._register_batch(batch_id, now, p.round)

        voter, round_ = p.author, p.round
        self._touched = set()
        cov = self._covered.setdefault(p.id, set())
        if voter not in cov:
            cov.add(voter)
            self._vote_proposal_content(p, voter, round_)
            stack = list(p.parents)
            while stack:
                qid = stack.pop()
                qcov = self._covered.setdefault(qid, set())
                if voter in qcov:
                    continue
                qcov.add(voter)
                q = self.dag.proposals[qid]
                self._vote_proposal_content(q, voter, round_)
                stack.extend(q.parents)

        if round_ % 2 == 1:
            # Only transactions whose votes this proposal contributed are
            # candidates: a vote that lands during an even round never
            # triggers the fast channel.
            return self._fast_sweep(now, round_)
        return []

    def _register_batch(self, batch_id: bytes, now: float, round_: int) -> None:
        self.seen_batches.add(batch_id)
        batch = self.dag.get_batch(batch_id)
        for tx in batch.txs:
            if tx.id in self.committed or tx.id in self.tx_inputs:
                continue
            refs = tx.input_refs()
            self.tx_inputs[tx.id] = refs
            self._emit(tx.id, TxPhase.SUBMITTED, None, now, round_)
            doomed = False
            for ref in sorted(refs):
                if ref in self.committed_spent:
                    doomed = True
                spenders = self.txo_spenders.setdefault(ref, set())
                for other in spenders:
                    if self.fast.get(other) is TxResult.SUCCESS:
                        doomed = True
                spenders.add(tx.id)
                if len(spenders) >= 2:
                    for t in spenders:
                        if t not in self.conflicted:
                            self.conflicted.add(t)
                            self._fast_candidates.discard(t)
            if doomed:
                self._mark_fast(tx.id, TxResult.FAILED, now, round_)

    def _vote_proposal_content(self, p: Proposal, voter: int, round_: int) -> None:
        for batch_id in p.batches:
            rec = self.batch_votes.setdefault(batch_id, {})
            prev = rec.get(voter)
            if prev is None or round_ < prev:
                rec[voter] = round_
            batch = self.dag.get_batch(batch_id)
            for tx in batch.txs:
                self._add_tx_vote(tx.id, voter, round_)

    def _add_tx_vote(self, tx_id: TxId, voter: int, round_: int) -> None:
        rec = self.tx_votes.setdefault(tx_id, {})
        prev = rec.get(voter)
        if prev is None:
            rec[voter] = round_
            self._touched.add(tx_id)
            count = self._vote_count.get(tx_id, 0) + 1
            self._vote_count[tx_id] = count
            if (
                count >= self.fast_vote_threshold
                and tx_id not in self.conflicted
                and tx_id not in self.fast
                and tx_id not in self.committed
            ):
                self._fast_candidates.add(tx_id)
        elif round_ < prev:
            rec[voter] = round_
            self._touched.add(tx_id)

    def _fast_sweep(self, now: float, round_: int) -> list[tuple[TxId, TxResult]]:
        out = []
        for tx_id in sorted(self._fast_candidates & self._touched):
            if tx_id in self.conflicted or tx_id in self.fast or tx_id in self.committed:
                continue
            if self._vote_count.get(tx_id, 0) >= self.fast_vote_threshold:
                self._mark_fast(tx_id, TxResult.SUCCESS, now, round_)
                out.append((tx_id, TxResult.SUCCESS))
        self._fast_candidates.difference_update(t for t, _ in out)
        return out

    def fast_commit_eligible(self, tx_id: TxId) -> bool:
        """Vote-count and conflict test of the fast rule (caller gates parity)."""
        return (
            self._vote_count.get(tx_id, 0) >= self.fast_vote_threshold
            and tx_id not in self.conflicted
        )

    def conflicted_tx(self) -> dict[TxoId, set[TxId]]:
        """Outputs spent by two or more live submitted transactions."""
        return {
            txo: set(spenders)
            for txo, spenders in self.txo_spenders.items()
            if len(spenders) >= 2
        }

    # -- result resolution ------------------------------------------------------

    def _epoch_transactions(self, proposals: Iterable[Proposal], view) -> list[Transaction]:
        txs = []
        seen: set[TxId] = set()
        for p in proposals:
            for batch_id in p.batches:
                batch = self.dag.get_batch(batch_id)
                for tx in batch.txs:
                    if tx.id in seen:
                        continue
                    seen.add(tx.id)
                    if view.committed_result(tx.id) is None:
                        txs.append(tx)
        return txs

    def _resolve(
        self,
        txs: list[Transaction],
        frontier: Frontier,
        view,
        extra_vote: Optional[tuple[int, int]] = None,
    ) -> tuple[set[TxId], set[TxId]]:
        """Pure resolution of one epoch into (successful, failed) id sets.

        Conflict groups are formed from the epoch's own inputs, processed in
        ascending output order.  Per group and node only the earliest
        frontier-pruned vote counts, ties counting for all tied transactions;
        the winner maximizes (vote count, transaction order).  Everything a
        winner spends cascades to failure, as do transactions spending an
        output consumed by a previously committed winner.
        """
        st: set[TxId] = set()
        ft: set[TxId] = set()
        decided: set[TxId] = set()

        spend_map: dict[TxoId, list[Transaction]] = {}
        for tx in txs:
            for ref in sorted(tx.input_refs()):
                spend_map.setdefault(ref, []).append(tx)

        for tx in txs:
            if any(view.spent_by(ref) is not None for ref in tx.input_refs()):
                ft.add(tx.id)
                decided.add(tx.id)

        contested: set[TxId] = set()
        for members in spend_map.values():
            if len(members) >= 2:
                for tx in members:
                    contested.add(tx.id)

        for tx in txs:
            if tx.id not in decided and tx.id not in contested:
                st.add(tx.id)

        pruned: dict[TxId, dict[int, int]] = {}

        def pruned_votes(tx_id: TxId) -> dict[int, int]:
            pv = pruned.get(tx_id)
            if pv is None:
                pv = {
                    node: r
                    for node, r in self.tx_votes.get(tx_id, {}).items()
                    if r <= frontier.get(node, -1)
                }
                if extra_vote is not None:
                    node, r = extra_vote
                    if r <= frontier.get(node, -1) and r < pv.get(node, r + 1):
                        pv[node] = r
                pruned[tx_id] = pv
            return pv

        for txo in sorted(spend_map):
            members = spend_map[txo]
            if len(members) < 2:
                continue
            alive = [tx for tx in members if tx.id not in decided]
            if not alive:
                continue
            if len(alive) == 1:
                winner = alive[0]
            else:
                counts: dict[TxId, int] = {tx.id: 0 for tx in alive}
                node_best: dict[int, int] = {}
                for tx in alive:
                    for node, r in pruned_votes(tx.id).items():
                        best = node_best.get(node)
                        if best is None or r < best:
                            node_best[node] = r
                for tx in alive:
                    pv = pruned_votes(tx.id)
                    counts[tx.id] = sum(
                        1 for node, r in pv.items() if r == node_best[node]
                    )
                winner = max(alive, key=lambda tx: (counts[tx.id], tx.id))
            st.add(winner.id)
            decided.add(winner.id)
            for tx in alive:
                if tx.id != winner.id:
                    ft.add(tx.id)
                    decided.add(tx.id)
            for ref in sorted(winner.input_refs()):
                for tx2 in spend_map.get(ref, []):
                    if tx2.id not in decided:
                        ft.add(tx2.id)
                        decided.add(tx2.id)
        return st, ft

    # -- formal commitment (Board.Commit) ----------------------------------------

    def commit(
        self, ps: list[Proposal], frontier: Frontier, now: float = 0.0, trigger_round: int = -1
    ) -> CommitOutcome:
        """Commit every uncommitted transaction in the emitted sub-DAG.

        Applies results, rejects live conflictors of winners, cleans up vote
        and conflict state, and fast-commits transactions that became
        eligible through the resolution.
        """
        view = _LiveView(self)
        txs = self._epoch_transactions(ps, view)
        st, ft = self._resolve(txs, frontier, view)

        by_id = {tx.id: tx for tx in txs}
        for tx in txs:
            result = TxResult.SUCCESS if tx.id in st else TxResult.FAILED
            prior = self.fast.get(tx.id)
            if prior is not None and prior is not result:
                raise ProtocolViolation(
                    f"tx {tx.id.hex()} fast-committed {prior.value} but committed {result.value}"
                )
            self.committed[tx.id] = result
            self._emit(tx.id, TxPhase.COMMITTED, result, now, trigger_round)
        for tx_id in st:
            for ref in by_id[tx_id].input_refs():
                self.committed_spent[ref] = tx_id

        # Live conflictors of committed winners are now doomed.
        for tx_id in sorted(st):
            for ref in sorted(by_id[tx_id].input_refs()):
                for other in sorted(self.txo_spenders.get(ref, ())):
                    if other not in self.committed:
                        self._mark_fast(other, TxResult.FAILED, now, trigger_round)

        # Drop committed transactions from the live conflict indexes.  Vote
        # records are retained: witness recomputation for older proposals must
        # see the same frontier-pruned votes the proposer saw.
        survivors: set[TxId] = set()
        for tx_id in st | ft:
            self._fast_candidates.discard(tx_id)
            refs = self.tx_inputs.pop(tx_id, frozenset())
            for ref in refs:
                spenders = self.txo_spenders.get(ref)
                if spenders is None:
                    continue
                spenders.discard(tx_id)
                if spenders:
                    survivors.update(spenders)
                else:
                    del self.txo_spenders[ref]

        # Survivors whose conflicts all resolved may leave the conflicted set
        # and may now satisfy the fast rule.
        newly_eligible = []
        for tx_id in sorted(survivors):
            if tx_id in self.committed or tx_id not in self.conflicted:
                continue
            refs = self.tx_inputs.get(tx_id, frozenset())
            still = any(len(self.txo_spenders.get(ref, ())) >= 2 for ref in refs)
            if not still:
                self.conflicted.discard(tx_id)
                if (
                    tx_id not in self.fast
                    and self._vote_count.get(tx_id, 0) >= self.fast_vote_threshold
                ):
                    newly_eligible.append(tx_id)
        for tx_id in newly_eligible:
            self._mark_fast(tx_id, TxResult.SUCCESS, now, trigger_round)

        return CommitOutcome(st=tuple(sorted(st)), ft=tuple(sorted(ft)))

    # -- side-effect-free simulation ----------------------------------------------

    def _elected_proposal(self, round_: int) -> Optional[Proposal]:
        author = self.coin(round_)
        pid = self.dag.by_author_round.get((author, round_))
        return self.dag.proposals[pid] if pid else None

    def chain_prev(self, leader_mask: int, leader_round: int) -> ProposalId:
        """The committed leader immediately preceding a leader with this
        ancestry, assuming that leader commits: the highest even round below
        it whose elected proposal lies inside the ancestry."""
        r = leader_round - 2 if leader_round % 2 == 0 else leader_round - 1
        while r >= 4:
            cand = self._elected_proposal(r)
            if cand is not None:
                bit = self.dag._bit[cand.id]
                if leader_mask >> bit & 1:
                    return cand.id
            r -= 2
        return GENESIS_ID

    def _chain_view(self, leader_id: ProposalId) -> _ChainFrame:
        """Committed results of the full leader chain ending at leader_id,
        reconstructed hypothetically and memoized."""
        if leader_id == GENESIS_ID:
            return _EMPTY_FRAME
        frame = self._chain_frames.get(leader_id)
        if frame is not None:
            return frame
        leader = self.dag.proposals[leader_id]
        mask = self.dag.ancestry_mask(leader_id)
        prev_id = self.chain_prev(mask, leader.round)
        parent = self._chain_view(prev_id)
        epoch_mask = mask & ~self.dag.ancestry_mask(prev_id)
        proposals = self.dag.proposals_in_mask(epoch_mask)
        frontier = self.dag.frontier_of_mask(mask)
        txs = self._epoch_transactions(proposals, parent)
        st, ft = self._resolve(txs, frontier, parent)
        committed = {tx_id: TxResult.SUCCESS for tx_id in st}
        committed.update({tx_id: TxResult.FAILED for tx_id in ft})
        spent: dict[TxoId, TxId] = {}
        by_id = {tx.id: tx for tx in txs}
        for tx_id in st:
            for ref in by_id[tx_id].input_refs():
                spent[ref] = tx_id
        frame = _ChainFrame(committed, spent, parent)
        self._chain_frames[leader_id] = frame
        return frame

    def simulate_commit(
        self,
        prev_leader: ProposalId,
        proposal: Optional[Proposal] = None,
        draft_author: int = -1,
        draft_round: int = -1,
        draft_batches: tuple[bytes, ...] = (),
        draft_parents: tuple[ProposalId, ...] = (),
    ) -> tuple[list[bytes], set[TxId]]:
        """The (batches, failed set) a commit of this proposal would produce
        were it the committed leader directly following prev_leader.

        Accepts either a stored proposal or the fields of a draft that has not
        been inserted yet.  No board state is mutated.
        """
        if proposal is not None:
            draft_author = proposal.author
            draft_round = proposal.round
            draft_batches = proposal.batches
            draft_parents = proposal.parents
            mask = self.dag.ancestry_mask(proposal.id)
        else:
            mask = self.dag.draft_mask(draft_parents)
        prev_mask = self.dag.ancestry_mask(prev_leader)
        if prev_leader != GENESIS_ID and (mask & prev_mask) != prev_mask:
            raise ValueError("previous leader is not an ancestor of the proposal")

        epoch_mask = mask & ~prev_mask
        proposals = self.dag.proposals_in_mask(epoch_mask)
        if proposal is None:
            proposals.append(
                Proposal(
                    author=draft_author,
                    round=draft_round,
                    batches=draft_batches,
                    parents=draft_parents,
                )
            )
        frontier = self.dag.frontier_of_mask(mask)
        if frontier.get(draft_author, -1) < draft_round:
            frontier[draft_author] = draft_round

        view = self._chain_view(prev_leader)
        txs = self._epoch_transactions(proposals, view)
        extra = (draft_author, draft_round) if proposal is None else None
        _, ft = self._resolve(txs, frontier, view, extra_vote=extra)

        batches: list[bytes] = []
        seen_batches: set[bytes] = set()
        for p in proposals:
            for batch_id in p.batches:
                if batch_id not in seen_batches:
                    seen_batches.add(batch_id)
                    batches.append(batch_id)
        return batches, ft
