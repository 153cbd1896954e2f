"""Packed binary codes, popcount Hamming search, and a random-hyperplane baseline.

Codes live in {-1, +1}^k but are stored packed: bit 1 stands for +1,
bit index equals code index with little-endian order inside each byte,
and padding bits beyond k are zero.  Hamming distance is XOR plus
popcount, which on sign vectors equals (k - <a, b>) / 2.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np

from .hashnet import FeatureMatrix, sign_codes

__all__ = [
    "CodeStore",
    "RankedList",
    "pack_signs",
    "unpack_signs",
    "hamming",
    "search",
    "lsh_encode",
]

CODES_MAGIC = "pseudohash-codes"
CODES_VERSION = 1
_CODES_HEADER_RE = re.compile(rf"^{CODES_MAGIC} v(\d+) k=(\d+) n=(\d+)$")

_POPCOUNT = np.array([bin(byte).count("1") for byte in range(256)], dtype=np.uint8)


def pack_signs(signs) -> np.ndarray:
    """Pack rows of {-1, +1} codes into bytes."""
    arr = np.asarray(signs)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D array of sign codes")
    if arr.size and not np.isin(arr, (-1, 1)).all():
        raise ValueError("sign codes must be -1 or +1")
    return np.packbits((arr > 0).astype(np.uint8), axis=1, bitorder="little")


def unpack_signs(packed, k: int) -> np.ndarray:
    """Inverse of ``pack_signs`` for rows of known code length."""
    arr = np.asarray(packed, dtype=np.uint8)
    if arr.ndim != 2 or arr.shape[1] != (k + 7) // 8:
        raise ValueError("packed rows do not match the code length")
    bits = np.unpackbits(arr, axis=1, count=k, bitorder="little")
    return (bits.astype(np.int8) * 2 - 1)


@dataclass
class CodeStore:
    """Packed codes for a corpus, rows aligned with ``ids``."""

    k: int
    ids: list[str]
    bits: np.ndarray
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.ids = list(self.ids)
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.k < 1:
            raise ValueError("code length must be positive")
        if self.bits.ndim != 2 or self.bits.shape[1] != (self.k + 7) // 8:
            raise ValueError("packed rows do not match the code length")
        if len(self.ids) != self.bits.shape[0]:
            raise ValueError("id count does not match code row count")
        self._index = {item_id: i for i, item_id in enumerate(self.ids)}
        if len(self._index) != len(self.ids):
            raise ValueError("item ids must be unique")
        pad = self.k % 8
        if pad and self.bits.size and np.any(self.bits[:, -1] >> pad):
            raise ValueError("padding bits beyond the code length must be zero")

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._index

    def index_of(self, item_id: str) -> int:
        try:
            return self._index[item_id]
        except KeyError:
            raise ValueError(f"unknown item id {item_id!r}") from None

    def row(self, item_id: str) -> np.ndarray:
        return self.bits[self.index_of(item_id)]

    def signs(self) -> np.ndarray:
        return unpack_signs(self.bits, self.k)

    def subset(self, ids: list[str]) -> "CodeStore":
        rows = np.array([self.index_of(i) for i in ids], dtype=np.intp)
        return CodeStore(self.k, list(ids), self.bits[rows].copy())

    @classmethod
    def from_signs(cls, ids, signs) -> "CodeStore":
        arr = np.asarray(signs)
        if arr.ndim != 2:
            raise ValueError("expected a 2-D array of sign codes")
        return cls(arr.shape[1], list(ids), pack_signs(arr))

    def save(self, path: str) -> None:
        header = f"{CODES_MAGIC} v{CODES_VERSION} k={self.k} n={self.n}\n"
        tmp = f"{path}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(header.encode("ascii"))
            for item_id in self.ids:
                fh.write(f"{item_id}\n".encode("utf-8"))
            fh.write(np.ascontiguousarray(self.bits).tobytes())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str) -> "CodeStore":
        with open(path, "rb") as fh:
            header = fh.readline().decode("ascii", errors="replace").rstrip("\n")
            m = _CODES_HEADER_RE.match(header)
            if m is None:
                raise ValueError(f"{path}: not a codes file (bad header)")
            version, k, n = int(m.group(1)), int(m.group(2)), int(m.group(3))
            if version != CODES_VERSION:
                raise ValueError(f"{path}: unsupported codes version {version}")
            ids = []
            for _ in range(n):
                line = fh.readline()
                if not line.endswith(b"\n"):
                    raise ValueError(f"{path}: truncated id table")
                ids.append(line.decode("utf-8").rstrip("\n"))
            payload = fh.read()
        nbytes = (k + 7) // 8
        if len(payload) != n * nbytes:
            raise ValueError(f"{path}: expected {n * nbytes} code bytes, found {len(payload)}")
        bits = np.frombuffer(payload, dtype=np.uint8).reshape(n, nbytes).copy() if n else np.zeros((0, nbytes), np.uint8)
        return cls(k, ids, bits)


def hamming(a, b, k: int) -> int:
    """Hamming distance between two packed codes of length k."""
    av = np.asarray(a, dtype=np.uint8)
    bv = np.asarray(b, dtype=np.uint8)
    nbytes = (k + 7) // 8
    if av.ndim != 1 or av.shape != bv.shape or av.shape[0] != nbytes:
        raise ValueError("packed code length mismatch")
    return int(_POPCOUNT[np.bitwise_xor(av, bv)].sum())


def _distances(bits: np.ndarray, query: np.ndarray) -> np.ndarray:
    return _POPCOUNT[np.bitwise_xor(bits, query)].sum(axis=1, dtype=np.int64)


@dataclass
class RankedList:
    """Search result: (item_id, distance) entries in ascending rank order."""

    query_id: str | None
    entries: list[tuple[str, int]]

    def __len__(self) -> int:
        return len(self.entries)


def search(store: CodeStore, query, top_n: int, exclude_id: str | None = None,
           query_id: str | None = None) -> RankedList:
    """Exact linear scan, ascending Hamming distance.

    Ties break by ascending insertion index, so results are stable for
    a fixed store.  ``exclude_id`` drops one stored item, typically the
    query itself.
    """
    if store.n == 0:
        raise ValueError("cannot search an empty code store")
    if top_n < 1:
        raise ValueError("top_n must be at least 1")
    q = np.asarray(query, dtype=np.uint8)
    if q.ndim != 1 or q.shape[0] != store.bits.shape[1]:
        raise ValueError("query does not match the store's packed code length")
    dist = _distances(store.bits, q)
    order = np.argsort(dist, kind="stable")
    entries: list[tuple[str, int]] = []
    for idx in order:
        if exclude_id is not None and store.ids[idx] == exclude_id:
            continue
        entries.append((store.ids[idx], int(dist[idx])))
        if len(entries) == top_n:
            break
    return RankedList(query_id if query_id is not None else exclude_id, entries)


def lsh_encode(features: FeatureMatrix, k: int, seed: int) -> CodeStore:
    """Seeded random-hyperplane codes over the feature rows (untrained baseline)."""
    if k < 1:
        raise ValueError("code length must be positive")
    rng = np.random.default_rng(seed)
    planes = rng.standard_normal((k, features.d))
    return CodeStore.from_signs(features.ids, sign_codes(features.x @ planes.T))
