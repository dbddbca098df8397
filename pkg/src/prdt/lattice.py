"""Join-semilattice state types and composition combinators.

Every replicated state in this package is a value of one of these types
(or a frozen dataclass composed from them). The contract is uniform:

* ``merge(a, b)`` is the least upper bound: commutative, associative,
  idempotent.
* ``bottom()`` is the neutral element: ``merge(bottom, a) == a``.
* The partial order is derived: ``leq(a, b)`` iff ``merge(a, b) == b``
  under structural equality.

All values are immutable (frozen dataclasses over frozensets/tuples), so
they are safe to share across threads and to use as dict keys or cache
keys wherever every payload is hashable.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Mapping, Tuple


def merge(a, b):
    """Least upper bound of two lattice values of the same type."""
    return a.merge(b)


def leq(a, b) -> bool:
    """Partial-order test: a <= b iff merging a into b adds nothing."""
    return merge(a, b) == b


@dataclass(frozen=True)
class GrowSet:
    """Grow-only set; merge is set union."""

    elements: frozenset = frozenset()

    def __post_init__(self):
        if not isinstance(self.elements, frozenset):
            object.__setattr__(self, "elements", frozenset(self.elements))

    @classmethod
    def bottom(cls) -> "GrowSet":
        return _GROWSET_BOTTOM

    @classmethod
    def of(cls, *elements) -> "GrowSet":
        return cls(frozenset(elements))

    def merge(self, other: "GrowSet") -> "GrowSet":
        if not other.elements:
            return self
        if not self.elements:
            return other
        return GrowSet(self.elements | other.elements)

    def add(self, element) -> "GrowSet":
        return GrowSet(self.elements | {element})

    def __contains__(self, element) -> bool:
        return element in self.elements

    def __iter__(self) -> Iterator:
        return iter(self.elements)

    def __len__(self) -> int:
        return len(self.elements)


_GROWSET_BOTTOM = GrowSet(frozenset())


@dataclass(frozen=True)
class MergeMap:
    """Map whose merge unions key sets and merges values at shared keys.

    Entries are stored as a key-sorted tuple of pairs, so structural
    equality and iteration order are deterministic, and instances are
    hashable whenever the values are. Keys must be totally ordered.

    An entry whose value is bottom is distinct from an absent entry:
    nothing is ever pruned by merge.
    """

    entries: Tuple[tuple, ...] = ()

    def __post_init__(self):
        entries = self.entries
        if isinstance(entries, Mapping):
            entries = entries.items()
        entries = tuple(sorted(entries, key=lambda kv: kv[0]))
        object.__setattr__(self, "entries", entries)

    @classmethod
    def bottom(cls) -> "MergeMap":
        return _MERGEMAP_BOTTOM

    @classmethod
    def of(cls, mapping: Mapping) -> "MergeMap":
        return cls(tuple(mapping.items()))

    def merge(self, other: "MergeMap") -> "MergeMap":
        if not other.entries:
            return self
        if not self.entries:
            return other
        combined = dict(self.entries)
        for key, value in other.entries:
            mine = combined.get(key)
            combined[key] = value if mine is None else mine.merge(value)
        return MergeMap(tuple(combined.items()))

    def get(self, key, default=None):
        for k, v in self.entries:
            if k == key:
                return v
        return default

    def keys(self) -> Tuple:
        return tuple(k for k, _ in self.entries)

    def items(self) -> Tuple[tuple, ...]:
        return self.entries

    def max_key(self):
        if not self.entries:
            return None
        return self.entries[-1][0]

    def __contains__(self, key) -> bool:
        return any(k == key for k, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


_MERGEMAP_BOTTOM = MergeMap(())


@dataclass(frozen=True)
class MergeList:
    """Ordered sequence merged index-wise; the longer tail is kept.

    Length never shrinks under merge: len(merge(a, b)) is
    max(len(a), len(b)).
    """

    items: Tuple = ()

    def __post_init__(self):
        if not isinstance(self.items, tuple):
            object.__setattr__(self, "items", tuple(self.items))

    @classmethod
    def bottom(cls) -> "MergeList":
        return _MERGELIST_BOTTOM

    @classmethod
    def of(cls, items: Iterable) -> "MergeList":
        return cls(tuple(items))

    def merge(self, other: "MergeList") -> "MergeList":
        if not other.items:
            return self
        if not self.items:
            return other
        shared = min(len(self.items), len(other.items))
        head = tuple(a.merge(b) for a, b in zip(self.items, other.items))
        tail = self.items[shared:] if len(self.items) > shared else other.items[shared:]
        return MergeList(head + tail)

    def append(self, item) -> "MergeList":
        return MergeList(self.items + (item,))

    def __getitem__(self, index):
        return self.items[index]

    def __iter__(self) -> Iterator:
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)


_MERGELIST_BOTTOM = MergeList(())


@dataclass(frozen=True)
class Epoch:
    """Counter-tagged wrapper where the larger counter wins merges.

    Merging equal counters merges the inner values; merging unequal
    counters returns the larger-counter operand unchanged, discarding the
    other side entirely. There is no generic bottom: the neutral element
    is Epoch(0, bottom-of-inner), which depends on the inner type.
    """

    counter: int
    value: Any

    def merge(self, other: "Epoch") -> "Epoch":
        if self.counter > other.counter:
            return self
        if other.counter > self.counter:
            return other
        return Epoch(self.counter, self.value.merge(other.value))


class ProductMixin:
    """Field-wise merge for frozen dataclasses whose fields are all lattices."""

    def merge(self, other):
        cls = type(self)
        return cls(*(
            getattr(self, f.name).merge(getattr(other, f.name))
            for f in dataclasses.fields(cls)
        ))
