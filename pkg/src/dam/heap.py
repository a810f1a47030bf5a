"""Append-only heaps.

A :class:`Heap` is a value: :func:`alloc` returns a new heap and never
changes the old one.  Successive versions share one backing list, so a
chain of allocations costs amortised O(1) each; allocating from an older
version copies its prefix first.
"""

from __future__ import annotations

from typing import Any, Generic, Optional, TypeVar

A = TypeVar("A")
Ptr = int


class Heap(Generic[A]):
    __slots__ = ("_cells", "_size")

    def __init__(self, cells=None, size=None):
        self._cells = [] if cells is None else cells
        self._size = len(self._cells) if size is None else size

    def __len__(self) -> int:
        return self._size

    def __iter__(self):
        return iter(self._cells[: self._size])

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, Heap):
            return NotImplemented
        return self._size == other._size and is_prefix(self, other)

    def __hash__(self):
        return hash(tuple(self))

    def __repr__(self) -> str:
        return f"Heap({list(self)!r})"

    def alloc(self, x: A) -> tuple["Heap[A]", Ptr]:
        cells = self._cells
        if len(cells) != self._size:
            cells = cells[: self._size]
        cells.append(x)
        return Heap(cells, self._size + 1), self._size

    def deref(self, p: Ptr) -> Optional[A]:
        if 0 <= p < self._size:
            return self._cells[p]
        return None


def empty() -> Heap:
    return Heap()


def alloc(h: Heap[A], x: A) -> tuple[Heap[A], Ptr]:
    return h.alloc(x)


def deref(h: Heap[A], p: Ptr) -> Optional[A]:
    return h.deref(p)


def is_prefix(h1: Heap, h2: Heap) -> bool:
    """True iff every cell of ``h1`` sits at the same pointer in ``h2``."""
    if len(h1) > len(h2):
        return False
    if h1._cells is h2._cells:
        return True
    return all(h1._cells[i] == h2._cells[i] for i in range(len(h1)))


def from_cells(cells) -> Heap:
    return Heap(list(cells))
