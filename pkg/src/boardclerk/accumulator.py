"""Authenticated set commitments.

A commitment is the root of a Merkle tree over element digests.  For set
commitments the elements are sorted and deduplicated first, which makes the
root order-independent and allows non-membership proofs: an absent element is
proven by exhibiting the two adjacent leaves that bracket it.

Tree construction uses domain-separated hashing (0x00 for leaves, 0x01 for
internal nodes) and promotes an unpaired node to the next level unchanged, so
duplicate-leaf forgeries are not possible and proof verification can derive
the level widths from the committed element count alone.
"""

from __future__ import annotations

from dataclasses import dataclass

from .hashing import digest

EMPTY_ROOT = digest(b"")


def _leaf(elem: bytes) -> bytes:
    return digest(b"\x00" + elem)


def _node(left: bytes, right: bytes) -> bytes:
    return digest(b"\x01" + left + right)


def _levels(leaves: list[bytes]) -> list[list[bytes]]:
    if not leaves:
        return []
    levels = [[_leaf(e) for e in leaves]]
    while len(levels[-1]) > 1:
        cur = levels[-1]
        nxt = []
        for i in range(0, len(cur) - 1, 2):
            nxt.append(_node(cur[i], cur[i + 1]))
        if len(cur) % 2 == 1:
            nxt.append(cur[-1])
        levels.append(nxt)
    return levels


def merkle_root(leaves: list[bytes]) -> bytes:
    """Root over an ordered leaf list; empty list gives the empty sentinel."""
    levels = _levels(leaves)
    return levels[-1][0] if levels else EMPTY_ROOT


def merkle_path(leaves: list[bytes], index: int) -> list[tuple[bool, bytes]]:
    """Authentication path for position ``index``.

    Each step is (sibling_is_right, sibling_hash); promoted nodes contribute
    no step.
    """
    if not 0 <= index < len(leaves):
        raise IndexError("leaf index out of range")
    path = []
    levels = _levels(leaves)
    for level in levels[:-1]:
        if index % 2 == 0:
            if index + 1 < len(level):
                path.append((True, level[index + 1]))
        else:
            path.append((False, level[index - 1]))
        index //= 2
    return path


def verify_path(
    elem: bytes, index: int, path: list[tuple[bool, bytes]], root: bytes, size: int
) -> bool:
    """Check that ``elem`` sits at ``index`` in a tree of ``size`` leaves."""
    if size <= 0 or not 0 <= index < size:
        return False
    cur = _leaf(elem)
    width = size
    step = 0
    while width > 1:
        if index % 2 == 0 and index + 1 == width:
            pass  # unpaired node, promoted
        else:
            if step >= len(path):
                return False
            is_right, sibling = path[step]
            expect_right = index % 2 == 0
            if is_right != expect_right:
                return False
            cur = _node(cur, sibling) if is_right else _node(sibling, cur)
            step += 1
        index //= 2
        width = (width + 1) // 2
    return step == len(path) and cur == root


@dataclass(frozen=True)
class SetCommitment:
    root: bytes
    size: int


@dataclass(frozen=True)
class MembershipProof:
    element: bytes
    index: int
    path: tuple[tuple[bool, bytes], ...]


@dataclass(frozen=True)
class NonMembershipProof:
    """Adjacent sorted leaves bracketing the absent element.

    ``left`` is None when the element sorts below the smallest leaf, ``right``
    is None when it sorts above the largest.  An empty set needs neither.
    """

    left: MembershipProof | None
    right: MembershipProof | None


def commit_list(elements: list[bytes] | set[bytes]) -> SetCommitment:
    """Order-independent commitment; duplicate digests collapse."""
    leaves = sorted(set(elements))
    return SetCommitment(root=merkle_root(leaves), size=len(leaves))


def prove_membership(elements: list[bytes] | set[bytes], elem: bytes) -> MembershipProof:
    leaves = sorted(set(elements))
    index = leaves.index(elem)
    return MembershipProof(elem, index, tuple(merkle_path(leaves, index)))


def verify_membership(proof: MembershipProof, commitment: SetCommitment) -> bool:
    return verify_path(
        proof.element, proof.index, list(proof.path), commitment.root, commitment.size
    )


def prove_non_membership(
    elements: list[bytes] | set[bytes], elem: bytes
) -> NonMembershipProof:
    leaves = sorted(set(elements))
    if elem in leaves:
        raise ValueError("element is present")
    lo = 0
    while lo < len(leaves) and leaves[lo] < elem:
        lo += 1
    left = None
    right = None
    if lo > 0:
        left = MembershipProof(leaves[lo - 1], lo - 1, tuple(merkle_path(leaves, lo - 1)))
    if lo < len(leaves):
        right = MembershipProof(leaves[lo], lo, tuple(merkle_path(leaves, lo)))
    return NonMembershipProof(left=left, right=right)


def verify_non_membership(
    proof: NonMembershipProof, commitment: SetCommitment, elem: bytes
) -> bool:
    if commitment.size == 0:
        return commitment.root == EMPTY_ROOT and proof.left is None and proof.right is None
    left, right = proof.left, proof.right
    if left is None and right is None:
        return False
    if left is not None:
        if not (left.element < elem and verify_membership(left, commitment)):
            return False
    if right is not None:
        if not (elem < right.element and verify_membership(right, commitment)):
            return False
    if left is None:
        return right is not None and right.index == 0
    if right is None:
        return left.index == commitment.size - 1
    return right.index == left.index + 1
