"""DAG-based BFT consensus with a UTXO fast-commit channel and hyper-blocks."""

from .accumulator import (
    MembershipProof,
    NonMembershipProof,
    SetCommitment,
    commit_list,
    prove_membership,
    prove_non_membership,
    verify_membership,
    verify_non_membership,
)
from .board import BoardState, CommitOutcome, ProtocolViolation
from .clerk import Clerk, LeaderRecord, LeaderStatus, elect_leader
from .dag import GENESIS_ID, AddResult, DagStore, Proposal
from .hyperblock import (
    HyperBlock,
    HyperblockEngine,
    LeaderDag,
    ProposalWitness,
    TxResultProof,
    WitnessEntry,
    verify_tx_result,
)
from .simulator import LatencyRecord, SimConfig, SimResult, run
from .utxo import (
    Batch,
    Script,
    ScriptKind,
    Transaction,
    TxInput,
    TxPhase,
    TxResult,
    Txo,
    check_internal_validity,
    conflicts,
    make_batch,
    make_transaction,
    ord_less,
)

__version__ = "0.1.0"
