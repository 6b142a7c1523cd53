import random

import pytest

from boardclerk.dag import GENESIS_ID, AddResult, DagStore, Proposal

from .helpers import Cluster, batch_of, random_dag_cluster, tx_spending, fresh_txo_id
from .oracles import brute_frontier, closure


def round0(n):
    return [Proposal(author=a, round=0, batches=(), parents=()) for a in range(n)]


class TestAddProposal:
    def test_round0_genesis_accepted(self):
        dag = DagStore(4, 1)
        p = Proposal(author=0, round=0, batches=(), parents=())
        assert dag.add_proposal(p) is AddResult.ACCEPTED

    def test_round0_with_parents_rejected(self):
        dag = DagStore(4, 1)
        base = Proposal(author=0, round=0, batches=(), parents=())
        dag.add_proposal(base)
        bad = Proposal(author=1, round=0, batches=(), parents=(base.id,))
        assert dag.add_proposal(bad) is AddResult.REJECTED

    def test_quorum_arithmetic(self):
        # N=4, f=1: a round-1 proposal needs 3 parents, 2 are too few
        dag = DagStore(4, 1)
        r0 = round0(4)
        for p in r0:
            dag.add_proposal(p)
        thin = Proposal(author=0, round=1, batches=(), parents=(r0[0].id, r0[1].id))
        assert dag.add_proposal(thin) is AddResult.REJECTED
        ok = Proposal(author=0, round=1, batches=(), parents=tuple(p.id for p in r0[:3]))
        assert dag.add_proposal(ok) is AddResult.ACCEPTED

    def test_unknown_parent_defers_then_accepts(self):
        dag = DagStore(4, 1)
        r0 = round0(4)
        for p in r0[:3]:
            dag.add_proposal(p)
        child = Proposal(
            author=3, round=1, batches=(), parents=(r0[1].id, r0[2].id, r0[3].id)
        )
        assert dag.add_proposal(child) is AddResult.DEFERRED
        dag.add_proposal(r0[3])
        assert dag.add_proposal(child) is AddResult.ACCEPTED

    def test_parent_round_mismatch_rejected(self):
        dag = DagStore(4, 1)
        r0 = round0(4)
        for p in r0:
            dag.add_proposal(p)
        r1 = [
            Proposal(author=a, round=1, batches=(), parents=tuple(p.id for p in r0))
            for a in range(4)
        ]
        for p in r1:
            dag.add_proposal(p)
        mixed = Proposal(
            author=0, round=2, batches=(), parents=(r1[0].id, r1[1].id, r0[2].id)
        )
        assert dag.add_proposal(mixed) is AddResult.REJECTED

    def test_own_previous_proposal_must_be_linked(self):
        dag = DagStore(4, 1)
        r0 = round0(4)
        for p in r0:
            dag.add_proposal(p)
        # author 0 omits its own round-0 proposal
        bad = Proposal(
            author=0, round=1, batches=(), parents=(r0[1].id, r0[2].id, r0[3].id)
        )
        assert dag.add_proposal(bad) is AddResult.REJECTED

    def test_duplicate_insert_is_idempotent_accept(self):
        dag = DagStore(4, 1)
        p = Proposal(author=2, round=0, batches=(), parents=())
        assert dag.add_proposal(p) is AddResult.ACCEPTED
        before = len(dag.proposals)
        assert dag.add_proposal(p) is AddResult.ACCEPTED
        assert len(dag.proposals) == before

    def test_parents_first_invariant(self):
        rng = random.Random(5)
        cluster, proposals = random_dag_cluster(rng)
        rng.shuffle(proposals)
        pending = list(proposals)
        while pending:
            rest = []
            for p, _ in pending:
                result = cluster.dag.add_proposal(p)
                if result is AddResult.DEFERRED:
                    rest.append((p, _))
                else:
                    assert result is AddResult.ACCEPTED
                    for pid in p.parents:
                        assert pid in cluster.dag.proposals
            assert len(rest) < len(pending)
            pending = rest


class TestSubDag:
    def build(self):
        cluster = Cluster()
        for r in range(5):
            cluster.fill_round(r)
        return cluster

    def test_root_only(self):
        dag = DagStore(4, 1)
        p = Proposal(author=2, round=0, batches=(), parents=())
        dag.add_proposal(p)
        assert dag.sub_dag(p.id) == [p]

    def test_matches_closure_oracle_on_random_dags(self):
        rng = random.Random(77)
        for _ in range(40):
            cluster, proposals = random_dag_cluster(rng, max_rounds=8)
            for p, b in proposals:
                assert cluster.dag.add_proposal(p) is AddResult.ACCEPTED
            for p, _ in proposals:
                got = {q.id for q in cluster.dag.sub_dag(p.id)}
                assert got == closure(cluster.dag, p.id)

    def test_unknown_root_raises(self):
        dag = DagStore(4, 1)
        with pytest.raises(KeyError):
            dag.sub_dag(b"\x01" * 32)

    def test_order_is_round_then_author(self):
        cluster = self.build()
        root = cluster.dag.by_round[4][0]
        out = cluster.dag.sub_dag(root.id)
        keys = [(p.round, p.author) for p in out]
        assert keys == sorted(keys)

    def test_exclusion(self):
        cluster = self.build()
        root = cluster.dag.by_round[4][0]
        exclude = {p.id for p in cluster.dag.by_round[0]}
        out = cluster.dag.sub_dag(root.id, exclude)
        assert all(p.round > 0 for p in out)
        assert root in out

    def test_insertion_order_invariance(self):
        rng = random.Random(9)
        cluster, proposals = random_dag_cluster(rng, max_rounds=6)
        for p, _ in proposals:
            cluster.dag.add_proposal(p)
        roots = [p for p, _ in proposals]
        expected = {p.id: [q.id for q in cluster.dag.sub_dag(p.id)] for p in roots}

        for trial in range(3):
            other = DagStore(cluster.n, cluster.f)
            for bid, batch in cluster.dag.batch_store.items():
                other.add_batch(batch)
            order = list(proposals)
            random.Random(trial).shuffle(order)
            pending = order
            while pending:
                rest = []
                for p, b in pending:
                    if other.add_proposal(p) is AddResult.DEFERRED:
                        rest.append((p, b))
                pending = rest
            for p in roots:
                assert [q.id for q in other.sub_dag(p.id)] == expected[p.id]


class TestFrontier:
    def test_single_root(self):
        dag = DagStore(4, 1)
        p = Proposal(author=2, round=0, batches=(), parents=())
        dag.add_proposal(p)
        assert dag.frontier(p.id) == {2: 0}

    def test_chain_max(self):
        cluster = Cluster()
        for r in range(5):
            cluster.fill_round(r)
        root = cluster.dag.by_round[4][1]
        fr = cluster.dag.frontier(root.id)
        assert fr[1] == 4
        assert all(v <= 4 for v in fr.values())
        # every other author's latest reachable proposal is round 3
        assert fr == {0: 3, 1: 4, 2: 3, 3: 3}

    def test_matches_brute_force(self):
        rng = random.Random(123)
        for _ in range(30):
            cluster, proposals = random_dag_cluster(rng, max_rounds=8)
            for p, _ in proposals:
                cluster.dag.add_proposal(p)
            for p, _ in proposals:
                assert cluster.dag.frontier(p.id) == brute_frontier(cluster.dag, p.id)

    def test_unknown_root_raises(self):
        dag = DagStore(4, 1)
        with pytest.raises(KeyError):
            dag.frontier(b"\x02" * 32)


class TestLinkSupport:
    def test_full_support(self):
        cluster = Cluster()
        r0 = cluster.fill_round(0)
        cluster.fill_round(1)
        leader = cluster.dag.by_round[0][2]
        assert cluster.dag.link_support(leader.id) == 4

    def test_matches_scan(self):
        rng = random.Random(55)
        for _ in range(20):
            cluster, proposals = random_dag_cluster(rng, max_rounds=6)
            for p, _ in proposals:
                cluster.dag.add_proposal(p)
            for p, _ in proposals:
                expected = sum(
                    1
                    for q in cluster.dag.by_round.get(p.round + 1, [])
                    if p.id in q.parents
                )
                assert cluster.dag.link_support(p.id) == expected

    def test_zero_when_no_followers(self):
        dag = DagStore(4, 1)
        p = Proposal(author=0, round=0, batches=(), parents=())
        dag.add_proposal(p)
        assert dag.link_support(p.id) == 0


class TestExport:
    def test_edge_list_format(self):
        cluster = Cluster(n=4, f=1)
        cluster.fill_round(0)
        cluster.fill_round(1)
        lines = cluster.dag.export_edges().splitlines()
        assert "0 0 ->" in lines
        assert "1 0 -> 0 0" in lines
        assert "1 3 -> 0 2" in lines
        # one genesis line per round-0 proposal plus 4x4 round-1 edges
        assert len(lines) == 4 + 16


class TestGenesisSentinel:
    def test_genesis_has_empty_ancestry(self):
        dag = DagStore(4, 1)
        assert dag.ancestry_mask(GENESIS_ID) == 0
