"""Extended-UTXO transaction model.

Transactions reference outputs by digest, carry per-input witness data, and
create new outputs guarded by small predicate scripts.  Internal validity is
a transaction-local check; conflicts (double spends) are detected purely from
input digest overlap.  The deterministic transaction order used for conflict
tie-breaking is lexicographic comparison of transaction ids, which for hex
strings and raw bytes coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

from .accumulator import merkle_root
from .hashing import Reader, digest, enc_bytes, enc_list, enc_u32

TxoId = bytes
TxId = bytes


class UnknownInputError(Exception):
    """An input references a Txo the caller cannot resolve.

    Distinct from plain invalidity so the caller can defer and retry after
    synchronizing instead of rejecting the transaction.
    """


class InvalidTransactionError(Exception):
    pass


class BatchConflictError(Exception):
    pass


class ScriptKind(Enum):
    ALWAYS_TRUE = 0
    ALWAYS_FALSE = 1
    REQUIRE_WITNESS = 2


@dataclass(frozen=True)
class Script:
    kind: ScriptKind
    expected: bytes = b""

    def evaluate(self, witness: bytes, data: bytes, tx: "Transaction") -> bool:
        """Pure predicate over (witness, data, transaction)."""
        if self.kind is ScriptKind.ALWAYS_TRUE:
            return True
        if self.kind is ScriptKind.ALWAYS_FALSE:
            return False
        return digest(witness) == self.expected

    def encode(self) -> bytes:
        return enc_u32(self.kind.value) + enc_bytes(self.expected)

    @classmethod
    def decode(cls, r: Reader) -> "Script":
        return cls(ScriptKind(r.u32()), r.bytes_())


@dataclass(frozen=True)
class Txo:
    id: TxoId
    data: bytes
    script: Script


@dataclass(frozen=True)
class TxInput:
    ref: TxoId
    witness: bytes


@dataclass(frozen=True)
class Transaction:
    id: TxId
    inputs: tuple[TxInput, ...]
    outputs: tuple[Txo, ...]

    def input_refs(self) -> frozenset[TxoId]:
        return frozenset(i.ref for i in self.inputs)


def txo_id(creating_tx_id: TxId, output_index: int) -> TxoId:
    """Output identity folds the producing transaction id and index."""
    return digest(creating_tx_id + enc_u32(output_index))


def _encode_body(inputs: Iterable[TxInput], output_specs: Iterable[tuple[bytes, Script]]) -> bytes:
    ins = enc_list([enc_bytes(i.ref) + enc_bytes(i.witness) for i in inputs])
    outs = enc_list([enc_bytes(data) + script.encode() for data, script in output_specs])
    return ins + outs


def make_transaction(
    inputs: list[TxInput], output_specs: list[tuple[bytes, Script]]
) -> Transaction:
    """Build a transaction; output ids derive from the computed tx id.

    Inputs must be non-empty and reference distinct outputs.
    """
    if not inputs:
        raise InvalidTransactionError("transaction needs at least one input")
    refs = [i.ref for i in inputs]
    if len(set(refs)) != len(refs):
        raise InvalidTransactionError("duplicate input reference")
    tx_id = digest(_encode_body(inputs, output_specs))
    outputs = tuple(
        Txo(id=txo_id(tx_id, idx), data=data, script=script)
        for idx, (data, script) in enumerate(output_specs)
    )
    return Transaction(id=tx_id, inputs=tuple(inputs), outputs=outputs)


def serialize_transaction(tx: Transaction) -> bytes:
    return _encode_body(tx.inputs, [(o.data, o.script) for o in tx.outputs])


def deserialize_transaction(data: bytes) -> Transaction:
    r = Reader(data)
    inputs = []
    for _ in range(r.count()):
        ref = r.bytes_()
        witness = r.bytes_()
        inputs.append(TxInput(ref=ref, witness=witness))
    specs = []
    for _ in range(r.count()):
        out_data = r.bytes_()
        script = Script.decode(r)
        specs.append((out_data, script))
    r.expect_done()
    return make_transaction(inputs, specs)


class TxPhase(Enum):
    VERIFIED = "verified"
    SUBMITTED = "submitted"
    FAST_COMMITTED = "fast_committed"
    COMMITTED = "committed"


class TxResult(Enum):
    SUCCESS = "success"
    FAILED = "failed"


_LEGAL_TRANSITIONS = {
    TxPhase.VERIFIED: {TxPhase.SUBMITTED},
    TxPhase.SUBMITTED: {TxPhase.FAST_COMMITTED, TxPhase.COMMITTED},
    TxPhase.FAST_COMMITTED: {TxPhase.COMMITTED},
    TxPhase.COMMITTED: set(),
}


def check_transition(current: TxPhase, nxt: TxPhase) -> None:
    if nxt not in _LEGAL_TRANSITIONS[current]:
        raise ValueError(f"illegal transition {current.value} -> {nxt.value}")


TxoResolver = Callable[[TxoId], Txo]
Predicate = Callable[[object], bool]


def check_internal_validity(
    tx: Transaction,
    resolve: TxoResolver,
    utxo_constraint: Predicate | None = None,
    tx_constraint: Predicate | None = None,
) -> bool:
    """Transaction-local validity: scripts, output constraint, tx constraint.

    Raises UnknownInputError when an input's Txo cannot be resolved, so the
    caller can distinguish "defer" from "reject".
    """
    for inp in tx.inputs:
        try:
            txo = resolve(inp.ref)
        except KeyError:
            raise UnknownInputError(inp.ref.hex()) from None
        if txo is None:
            raise UnknownInputError(inp.ref.hex())
        if not txo.script.evaluate(inp.witness, txo.data, tx):
            return False
    if utxo_constraint is not None:
        for out in tx.outputs:
            if not utxo_constraint(out):
                return False
    if tx_constraint is not None and not tx_constraint(tx):
        return False
    return True


def conflicts(a: Transaction, b: Transaction) -> bool:
    """True iff the two transactions spend at least one common output."""
    if a.id == b.id:
        raise ValueError("conflicts() requires distinct transactions")
    return not a.input_refs().isdisjoint(b.input_refs())


def ord_less(a: Transaction, b: Transaction) -> bool:
    """Strict total order by transaction id (lexicographic hex order)."""
    return a.id < b.id


@dataclass(frozen=True)
class Batch:
    """Conflict-free wrapper of internally valid transactions.

    The id is a Merkle root over the contained transaction ids in order, so
    per-transaction inclusion paths against the batch id are available.
    """

    id: bytes
    txs: tuple[Transaction, ...] = field(compare=False)

    def tx_ids(self) -> list[TxId]:
        return [tx.id for tx in self.txs]


def batch_id(tx_ids: list[TxId]) -> bytes:
    return merkle_root(tx_ids)


def make_batch(
    txs: list[Transaction],
    resolve: TxoResolver | None = None,
    utxo_constraint: Predicate | None = None,
    tx_constraint: Predicate | None = None,
) -> Batch:
    """Wrap transactions into a batch; empty batches are legal.

    Pairwise conflicts inside one batch are rejected.  When a resolver is
    supplied, every transaction is re-checked for internal validity.
    """
    seen: dict[TxoId, TxId] = {}
    for tx in txs:
        for ref in tx.input_refs():
            other = seen.get(ref)
            if other is not None and other != tx.id:
                raise BatchConflictError(f"conflicting batch: shared input {ref.hex()}")
            seen[ref] = tx.id
        if resolve is not None:
            if not check_internal_validity(tx, resolve, utxo_constraint, tx_constraint):
                raise InvalidTransactionError(f"invalid transaction {tx.id.hex()}")
    return Batch(id=batch_id([tx.id for tx in txs]), txs=tuple(txs))
