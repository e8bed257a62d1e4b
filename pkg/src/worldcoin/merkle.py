"""Merkle commitments over transaction batches.

Construction: leaves are the SHA-256 hashes of the canonical transaction
serializations; an internal node is SHA-256(left || right); an odd node at
any level is carried up unchanged (no duplication). Stated explicitly
because implementations differ and roots must be reproducible.
"""

from __future__ import annotations

import hashlib

LEFT = "left"
RIGHT = "right"


def merkle_levels(leaves: list[bytes]) -> list[list[bytes]]:
    """All tree levels, bottom (the leaves) first, root level last."""
    if not leaves:
        raise ValueError("cannot build a Merkle tree over zero leaves")
    levels = [list(leaves)]
    while len(levels[-1]) > 1:
        cur = levels[-1]
        nxt = [
            hashlib.sha256(cur[i] + cur[i + 1]).digest()
            for i in range(0, len(cur) - 1, 2)
        ]
        if len(cur) % 2:
            nxt.append(cur[-1])
        levels.append(nxt)
    return levels


def merkle_root(leaves: list[bytes]) -> bytes:
    return merkle_levels(leaves)[-1][0]


def merkle_siblings(leaves: list[bytes], index: int) -> list[tuple[bytes, str]]:
    """Sibling path for the leaf at `index`, each tagged with the side the
    sibling sits on. A carried-up odd node contributes no sibling, so paths
    can be shorter than ceil(log2(n)) at some indices."""
    if not 0 <= index < len(leaves):
        raise IndexError(f"leaf index {index} out of range for {len(leaves)} leaves")
    path = []
    for level in merkle_levels(leaves)[:-1]:
        partner = index ^ 1
        if partner < len(level):
            path.append((level[partner], LEFT if partner < index else RIGHT))
        index //= 2
    return path


def fold_siblings(leaf: bytes, siblings: list[tuple[bytes, str]]) -> bytes:
    """Recompute the root implied by a leaf and its tagged sibling path."""
    node = leaf
    for sibling, side in siblings:
        if side == LEFT:
            node = hashlib.sha256(sibling + node).digest()
        elif side == RIGHT:
            node = hashlib.sha256(node + sibling).digest()
        else:
            raise ValueError(f"sibling side must be left or right, got {side!r}")
    return node
