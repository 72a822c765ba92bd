"""Persistent hash array mapped trie with 64-way branching.

Keys are integers hashed with a fixed splitmix64 finalizer; levels 0-9 use
6 hash bits each and level 10 the remaining 4. Keys whose full 64-bit hashes
coincide (only possible for keys outside ``[0, 2**64)``) share a collision
bucket below level 10.

Nodes are never mutated after construction. Deleting down to a single leaf
pulls the leaf up into the parent, so equal contents always have the same
shape.
"""

from __future__ import annotations

from collections.abc import Iterator, Mapping
from typing import Any, Iterable

__all__ = ["Hamt", "mix64", "MAX_SHIFT", "check_hamt"]

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# Deepest branch level starts at bit 60; anything deeper is a collision bucket.
MAX_SHIFT = 60


def mix64(key: int) -> int:
    """splitmix64 finalizer over ``key + golden``; a bijection on 64 bits."""
    z = (key + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class Leaf:
    __slots__ = ("hash", "key", "value")

    def __init__(self, h: int, key: int, value: Any) -> None:
        self.hash = h
        self.key = key
        self.value = value

    def __repr__(self) -> str:
        return f"Leaf({self.key!r}: {self.value!r})"


class Branch:
    __slots__ = ("bitmap", "slots")

    def __init__(self, bitmap: int, slots: tuple) -> None:
        self.bitmap = bitmap
        self.slots = slots


class Collision:
    __slots__ = ("hash", "leaves")

    def __init__(self, h: int, leaves: tuple) -> None:
        self.hash = h
        self.leaves = leaves


EMPTY_BRANCH = Branch(0, ())


def merge_leaves(a: Leaf, b: Leaf, shift: int) -> Branch | Collision:
    """Smallest subtree rooted at ``shift`` holding two distinct keys."""
    if shift > MAX_SHIFT:
        return Collision(a.hash, (a, b))
    ca = (a.hash >> shift) & 63
    cb = (b.hash >> shift) & 63
    if ca == cb:
        return Branch(1 << ca, (merge_leaves(a, b, shift + 6),))
    if ca < cb:
        return Branch((1 << ca) | (1 << cb), (a, b))
    return Branch((1 << ca) | (1 << cb), (b, a))


def _insert(node, shift: int, leaf: Leaf, replace: bool):
    """Return (new_node, added). ``replace=False`` keeps an existing value."""
    if type(node) is Branch:
        bit = 1 << ((leaf.hash >> shift) & 63)
        bitmap = node.bitmap
        idx = (bitmap & (bit - 1)).bit_count()
        slots = node.slots
        if not bitmap & bit:
            return Branch(bitmap | bit, slots[:idx] + (leaf,) + slots[idx:]), True
        child = slots[idx]
        if type(child) is Leaf:
            if child.key == leaf.key:
                if not replace or child.value is leaf.value:
                    return node, False
                new_child = leaf
                added = False
            else:
                new_child = merge_leaves(child, leaf, shift + 6)
                added = True
        else:
            new_child, added = _insert(child, shift + 6, leaf, replace)
            if new_child is child:
                return node, False
        return Branch(bitmap, slots[:idx] + (new_child,) + slots[idx + 1:]), added
    # Collision bucket: every leaf here shares leaf.hash.
    leaves = node.leaves
    for i, old in enumerate(leaves):
        if old.key == leaf.key:
            if not replace or old.value is leaf.value:
                return node, False
            return Collision(node.hash, leaves[:i] + (leaf,) + leaves[i + 1:]), False
    return Collision(node.hash, leaves + (leaf,)), True


def _delete(node, shift: int, h: int, key: int, is_root: bool):
    """Return (new_node_or_None, removed)."""
    if type(node) is Collision:
        leaves = node.leaves
        for i, old in enumerate(leaves):
            if old.key == key:
                rest = leaves[:i] + leaves[i + 1:]
                if len(rest) == 1:
                    return rest[0], True
                return Collision(node.hash, rest), True
        return node, False
    bit = 1 << ((h >> shift) & 63)
    bitmap = node.bitmap
    if not bitmap & bit:
        return node, False
    idx = (bitmap & (bit - 1)).bit_count()
    slots = node.slots
    child = slots[idx]
    if type(child) is Leaf:
        if child.key != key:
            return node, False
        new_child = None
    else:
        new_child, removed = _delete(child, shift + 6, h, key, False)
        if not removed:
            return node, False
    if new_child is None:
        bitmap ^= bit
        slots = slots[:idx] + slots[idx + 1:]
    else:
        slots = slots[:idx] + (new_child,) + slots[idx + 1:]
    if not is_root:
        if not slots:
            return None, True
        if len(slots) == 1 and type(slots[0]) is Leaf:
            return slots[0], True
    return Branch(bitmap, slots), True


def _union(a, b, shift: int):
    """Left-biased union of two subtrees at the same position.

    Returns (node, duplicates) where duplicates counts keys present in both.
    """
    if a is b:
        return a, _count(a)
    ta = type(a)
    tb = type(b)
    if ta is Leaf:
        node, added = _insert(b, shift, a, True) if tb is not Leaf else _leaf_pair(b, a, shift, True)
        return node, 0 if added else 1
    if tb is Leaf:
        node, added = _insert(a, shift, b, False)
        return node, 0 if added else 1
    if ta is Collision:
        node, dups = b, 0
        for leaf in a.leaves:
            node, added = _insert(node, shift, leaf, True)
            dups += not added
        return node, dups
    if tb is Collision:
        node, dups = a, 0
        for leaf in b.leaves:
            node, added = _insert(node, shift, leaf, False)
            dups += not added
        return node, dups
    abm, bbm = a.bitmap, b.bitmap
    if not bbm:
        return a, 0
    if not abm:
        return b, 0
    bitmap = abm | bbm
    out = []
    dups = 0
    ia = ib = 0
    aslots, bslots = a.slots, b.slots
    rest = bitmap
    while rest:
        bit = rest & -rest
        rest ^= bit
        if abm & bit:
            ca = aslots[ia]
            ia += 1
            if bbm & bit:
                child, d = _union(ca, bslots[ib], shift + 6)
                ib += 1
                dups += d
                out.append(child)
            else:
                out.append(ca)
        else:
            out.append(bslots[ib])
            ib += 1
    return Branch(bitmap, tuple(out)), dups


def _leaf_pair(existing: Leaf, leaf: Leaf, shift: int, replace: bool):
    if existing.key == leaf.key:
        return (leaf if replace else existing), False
    return merge_leaves(existing, leaf, shift), True


def _count(node) -> int:
    t = type(node)
    if t is Leaf:
        return 1
    if t is Collision:
        return len(node.leaves)
    return sum(_count(c) for c in node.slots)


def iter_leaves(node) -> Iterator[Leaf]:
    """Preorder, ascending-slot walk over a persistent subtree."""
    stack = [node]
    pop = stack.pop
    while stack:
        n = pop()
        t = type(n)
        if t is Leaf:
            yield n
        elif t is Branch:
            stack.extend(reversed(n.slots))
        else:
            yield from n.leaves


class Hamt(Mapping):
    """An immutable map from integer keys to arbitrary values.

    ``insert``/``delete``/``union`` return new maps and share structure with
    the receiver.
    """

    __slots__ = ("_root", "_size")

    def __init__(self, root: Branch = EMPTY_BRANCH, size: int = 0) -> None:
        self._root = root
        self._size = size

    @classmethod
    def from_items(cls, items: Iterable[tuple[int, Any]]) -> "Hamt":
        h = EMPTY
        for k, v in items:
            h = h.insert(k, v)
        return h

    # -- queries -----------------------------------------------------------

    def get(self, key: int, default: Any = None) -> Any:
        h = mix64(key)
        node = self._root
        shift = 0
        while True:
            t = type(node)
            if t is Branch:
                bit = 1 << ((h >> shift) & 63)
                bitmap = node.bitmap
                if not bitmap & bit:
                    return default
                node = node.slots[(bitmap & (bit - 1)).bit_count()]
                shift += 6
            elif t is Leaf:
                return node.value if node.key == key else default
            else:
                for leaf in node.leaves:
                    if leaf.key == key:
                        return leaf.value
                return default

    def __getitem__(self, key: int) -> Any:
        v = self.get(key, _MISSING)
        if v is _MISSING:
            raise KeyError(key)
        return v

    def __contains__(self, key: object) -> bool:
        return self.get(key, _MISSING) is not _MISSING  # type: ignore[arg-type]

    def __len__(self) -> int:
        return self._size

    def __iter__(self) -> Iterator[int]:
        for leaf in iter_leaves(self._root):
            yield leaf.key

    def items(self) -> Iterator[tuple[int, Any]]:  # type: ignore[override]
        for leaf in iter_leaves(self._root):
            yield leaf.key, leaf.value

    def __repr__(self) -> str:
        body = ", ".join(f"{k!r}: {v!r}" for k, v in self.items())
        return f"Hamt({{{body}}})"

    # -- updates -----------------------------------------------------------

    def insert(self, key: int, value: Any) -> "Hamt":
        root, added = _insert(self._root, 0, Leaf(mix64(key), key, value), True)
        if root is self._root:
            return self
        return Hamt(root, self._size + added)

    def delete(self, key: int) -> "Hamt":
        root, removed = _delete(self._root, 0, mix64(key), key, True)
        if not removed:
            return self
        return Hamt(root, self._size - 1)

    def union(self, other: "Hamt") -> "Hamt":
        """Keys of both maps; on a shared key the receiver's value wins."""
        if not other._size:
            return self
        if not self._size:
            return other
        root, dups = _union(self._root, other._root, 0)
        return Hamt(root, self._size + other._size - dups)


_MISSING = object()
EMPTY = Hamt()


def check_hamt(h: Hamt) -> None:
    """Raise AssertionError if ``h`` violates any structural invariant."""
    count = _check_node(h._root, 0, 0, is_root=True)
    assert count == len(h), f"size {len(h)} but {count} leaves"


def _check_node(node, shift: int, prefix: int, is_root: bool) -> int:
    prefix_mask = (1 << shift) - 1 if shift <= 64 else MASK64
    t = type(node)
    if t is Leaf:
        assert node.hash == mix64(node.key), f"stale hash on {node!r}"
        assert node.hash & prefix_mask == prefix, f"{node!r} off its hash path"
        return 1
    if t is Collision:
        assert shift > MAX_SHIFT, "collision bucket above the last level"
        assert len(node.leaves) >= 2, "collision bucket with fewer than 2 leaves"
        keys = [leaf.key for leaf in node.leaves]
        assert len(set(keys)) == len(keys), "duplicate key in collision bucket"
        for leaf in node.leaves:
            assert leaf.hash == node.hash == mix64(leaf.key)
            assert leaf.hash & prefix_mask == prefix
        return len(node.leaves)
    assert t is Branch, f"unexpected node {node!r}"
    assert shift <= MAX_SHIFT, "branch below the last level"
    assert node.bitmap.bit_count() == len(node.slots), "bitmap/slot mismatch"
    if not is_root:
        assert node.slots, "empty interior branch"
        assert not (len(node.slots) == 1 and type(node.slots[0]) is Leaf), (
            "uncontracted single-leaf branch"
        )
    total = 0
    rest = node.bitmap
    for child in node.slots:
        bit = rest & -rest
        rest ^= bit
        chunk = bit.bit_length() - 1
        total += _check_node(child, shift + 6, prefix | (chunk << shift), False)
    return total
