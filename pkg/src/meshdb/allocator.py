"""Hierarchical buddy allocation of IP prefixes with hold-down reservations.

A pool owns one root prefix.  Allocations split free blocks in halves until a
block of the requested length exists; the lowest-address candidate always
wins, which keeps allocation order deterministic.  Freeing does not return a
block to the free list immediately: it parks the block as *reserved* until
the pool's hold-down timer expires, so a recently removed node that comes
back online cannot collide with a fresh allocation.  Expiry releases due
reservations and re-merges free sibling blocks into their parent.

All timestamps are injected; the allocator never reads a wall clock.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from typing import Optional

DEFAULT_HOLDDOWN_S = 30 * 86400

FREE = "free"
SPLIT = "split"
ALLOCATED = "allocated"
RESERVED = "reserved"


class AllocatorError(Exception):
    code = "allocator-error"


class InvalidLengthError(AllocatorError):
    code = "invalid-length"


class PoolExhaustedError(AllocatorError):
    code = "pool-exhausted"


class UnknownAllocationError(AllocatorError):
    code = "unknown-allocation"


class DoubleFreeError(AllocatorError):
    code = "double-free"


@dataclass(frozen=True)
class Allocation:
    pool_id: str
    prefix: str
    owner: str
    created_at: float


class _Block:
    __slots__ = ("base", "plen", "status", "freed_at", "children")

    def __init__(self, base: int, plen: int):
        self.base = base
        self.plen = plen
        self.status = FREE
        self.freed_at: Optional[float] = None
        self.children: Optional[tuple["_Block", "_Block"]] = None

    def size(self, max_len: int) -> int:
        return 1 << (max_len - self.plen)


class Pool:
    """Buddy allocator over one root prefix (IPv4 or IPv6)."""

    def __init__(self, pool_id: str, root_prefix: str, holddown_s: float = DEFAULT_HOLDDOWN_S):
        self.pool_id = pool_id
        self.root_prefix = ipaddress.ip_network(root_prefix)
        self.holddown_s = holddown_s
        self.max_len = self.root_prefix.max_prefixlen
        self._root = _Block(int(self.root_prefix.network_address), self.root_prefix.prefixlen)
        # (base, plen) -> block, for every node that currently exists
        self._blocks: dict[tuple[int, int], _Block] = {
            (self._root.base, self._root.plen): self._root
        }
        self._allocations: dict[tuple[int, int], Allocation] = {}

    # -- helpers ------------------------------------------------------------

    def _network(self, block: _Block) -> str:
        addr = ipaddress.ip_address(block.base)
        return f"{addr}/{block.plen}"

    def _split(self, block: _Block) -> None:
        half = 1 << (self.max_len - block.plen - 1)
        low = _Block(block.base, block.plen + 1)
        high = _Block(block.base + half, block.plen + 1)
        block.status = SPLIT
        block.children = (low, high)
        self._blocks[(low.base, low.plen)] = low
        self._blocks[(high.base, high.plen)] = high

    def _find_free(self, block: _Block, target_len: int) -> Optional[_Block]:
        if block.status in (ALLOCATED, RESERVED):
            return None
        if block.plen == target_len:
            return block if block.status == FREE else None
        if block.status == FREE:
            # Splitting a free block always succeeds via its lower half.
            self._split(block)
        for child in block.children:
            hit = self._find_free(child, target_len)
            if hit is not None:
                return hit
        return None

    # -- operations -----------------------------------------------------------

    def allocate(self, prefix_len: int, owner: str, now: float = 0.0) -> Allocation:
        """Grab the lowest-address free block of exactly `prefix_len`."""
        if prefix_len < self._root.plen or prefix_len > self.max_len:
            raise InvalidLengthError(
                f"prefix length {prefix_len} outside [{self._root.plen}, {self.max_len}]"
            )
        block = self._find_free(self._root, prefix_len)
        if block is None:
            raise PoolExhaustedError(
                f"pool {self.pool_id} has no free /{prefix_len} block"
            )
        block.status = ALLOCATED
        allocation = Allocation(self.pool_id, self._network(block), owner, now)
        self._allocations[(block.base, block.plen)] = allocation
        return allocation

    def free(self, allocation: Allocation, now: float) -> None:
        """Park the block as reserved until the hold-down timer expires."""
        net = ipaddress.ip_network(allocation.prefix)
        key = (int(net.network_address), net.prefixlen)
        block = self._blocks.get(key)
        if block is None or block.status not in (ALLOCATED, RESERVED):
            raise UnknownAllocationError(f"{allocation.prefix} is not a live allocation")
        if block.status == RESERVED:
            raise DoubleFreeError(f"{allocation.prefix} already freed")
        block.status = RESERVED
        block.freed_at = now
        del self._allocations[key]

    def expire(self, now: float) -> int:
        """Release due reservations and merge adjacent free buddies; returns count."""
        released = self._release(self._root, now)
        self._merge(self._root)
        return released

    def _release(self, block: _Block, now: float) -> int:
        if block.status == RESERVED:
            if block.freed_at + self.holddown_s <= now:
                block.status = FREE
                block.freed_at = None
                return 1
            return 0
        if block.status == SPLIT:
            return sum(self._release(child, now) for child in block.children)
        return 0

    def _merge(self, block: _Block) -> None:
        if block.status != SPLIT:
            return
        for child in block.children:
            self._merge(child)
        low, high = block.children
        if low.status == FREE and high.status == FREE:
            del self._blocks[(low.base, low.plen)]
            del self._blocks[(high.base, high.plen)]
            block.children = None
            block.status = FREE

    # -- introspection ----------------------------------------------------------

    def allocations(self) -> list[Allocation]:
        return sorted(self._allocations.values(), key=lambda a: a.prefix)

    def leaves(self) -> list[tuple[str, str]]:
        """(prefix, status) for every leaf block, lowest address first."""
        out: list[tuple[str, str]] = []

        def walk(block: _Block) -> None:
            if block.status == SPLIT:
                for child in block.children:
                    walk(child)
            else:
                out.append((self._network(block), block.status))

        walk(self._root)
        return out

    def reserved_prefixes(self) -> list[tuple[str, float]]:
        return [
            (self._network(b), b.freed_at)
            for b in self._blocks.values()
            if b.status == RESERVED
        ]

    # -- persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        def dump(block: _Block) -> dict:
            rec: dict = {"prefix": self._network(block), "status": block.status}
            if block.freed_at is not None:
                rec["freed_at"] = block.freed_at
            if block.children:
                rec["children"] = [dump(c) for c in block.children]
            return rec

        return {
            "id": self.pool_id,
            "root_prefix": str(self.root_prefix),
            "holddown_s": self.holddown_s,
            "tree": dump(self._root),
            "allocations": [
                {
                    "prefix": a.prefix,
                    "owner": a.owner,
                    "created_at": a.created_at,
                }
                for a in self.allocations()
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Pool":
        pool = cls(data["id"], data["root_prefix"], data["holddown_s"])

        def restore(rec: dict, block: _Block) -> None:
            if rec.get("children"):
                pool._split(block)
                for child_rec, child in zip(rec["children"], block.children):
                    restore(child_rec, child)
            else:
                block.status = rec["status"]
                block.freed_at = rec.get("freed_at")

        restore(data["tree"], pool._root)
        for arec in data["allocations"]:
            net = ipaddress.ip_network(arec["prefix"])
            key = (int(net.network_address), net.prefixlen)
            pool._allocations[key] = Allocation(
                pool.pool_id, arec["prefix"], arec["owner"], arec["created_at"]
            )
        return pool
