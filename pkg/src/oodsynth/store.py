"""Class-conditional embedding buffers, EMA prototypes, and kNN queries.

An IdStore keeps, for each of C classes, a fixed-capacity FIFO buffer of
unit-norm embeddings plus one exponentially-averaged unit-norm prototype.
It is the in-distribution prior every downstream component queries.

Concurrency contract: single writer, many readers. ``insert`` and
``update_prototype`` need exclusive access; all queries are read-only and
may run concurrently against a frozen ``snapshot()``.

Serialization: ``save``/``load`` support two formats, chosen by file
extension. ``.json`` produces a plain JSON document. Any other extension
writes the columnar binary layout (all little-endian):

    magic   8 bytes  b"IDSTORE1"
    header  uint32 C, uint32 d, uint32 B, float64 gamma
    then for each class c = 0..C-1:
        uint32 n_c             number of buffered embeddings
        uint8  has_prototype   1 if the prototype is defined
        float64[d]             prototype coordinates (only if defined)
        float64[n_c * d]       buffer rows, row-major, oldest first
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    AntipodalPrototypesError,
    BadArgError,
    BadClassError,
    CorruptStoreError,
    EmptyBufferError,
    InsufficientDataError,
    NotUnitError,
    PrototypeUndefinedError,
)
from .sphere import normalize

UNIT_TOL = 1e-6  # accepted deviation of ||z|| from 1 on insert
ANTIPODAL_TOL = 1e-8

_MAGIC = b"IDSTORE1"


@dataclass(frozen=True)
class ClusterPair:
    """An unordered-in-meaning, ordered-in-storage pair of class ids."""

    u: int
    v: int

    def __post_init__(self):
        if self.u == self.v:
            raise BadArgError(f"cluster pair needs two distinct classes, got ({self.u}, {self.v})")


class IdStore:
    """Per-class FIFO embedding buffers with EMA prototypes."""

    def __init__(self, num_classes: int, dim: int, capacity: int, ema_factor: float = 0.95):
        if num_classes < 2:
            raise BadArgError(f"need at least 2 classes, got {num_classes}")
        if dim < 2:
            raise BadArgError(f"need dimension >= 2, got {dim}")
        if capacity < 1:
            raise BadArgError(f"need capacity >= 1, got {capacity}")
        if not 0.0 < ema_factor < 1.0:
            raise BadArgError(f"ema_factor must lie in (0, 1), got {ema_factor}")
        self.num_classes = num_classes
        self.dim = dim
        self.capacity = capacity
        self.ema_factor = ema_factor
        self._bufs = [np.empty((capacity, dim)) for _ in range(num_classes)]
        self._counts = [0] * num_classes
        self._heads = [0] * num_classes  # next write slot once the buffer is full
        self._protos = np.zeros((num_classes, dim))
        self._has_proto = [False] * num_classes
        self._version = 0
        self._view_cache: dict = {}

    # -- writes ----------------------------------------------------------

    def _check_class(self, class_id: int) -> None:
        if not 0 <= class_id < self.num_classes:
            raise BadClassError(f"class id {class_id} outside [0, {self.num_classes})")

    def insert(self, class_id: int, z: np.ndarray) -> None:
        """Append z to the class buffer, evicting the oldest entry when full."""
        self._check_class(class_id)
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise BadArgError(f"embedding shape {z.shape} does not match dim {self.dim}")
        if abs(np.linalg.norm(z) - 1.0) > UNIT_TOL:
            raise NotUnitError(f"embedding norm {np.linalg.norm(z):.8f} deviates from 1")
        buf = self._bufs[class_id]
        if self._counts[class_id] < self.capacity:
            buf[self._counts[class_id]] = z
            self._counts[class_id] += 1
        else:
            buf[self._heads[class_id]] = z
            self._heads[class_id] = (self._heads[class_id] + 1) % self.capacity
        self._version += 1

    def insert_batch(self, embeddings: np.ndarray, labels: np.ndarray) -> None:
        for z, label in zip(np.asarray(embeddings, dtype=float), labels):
            self.insert(int(label), z)

    def update_prototype(self, class_id: int, batch_mean: np.ndarray) -> None:
        """EMA-blend the prototype with a batch mean and re-normalize.

        First call defines the prototype directly as normalize(batch_mean).
        """
        self._check_class(class_id)
        if self._counts[class_id] == 0:
            raise EmptyBufferError(f"class {class_id} has no embeddings yet")
        batch_mean = np.asarray(batch_mean, dtype=float)
        if self._has_proto[class_id]:
            g = self.ema_factor
            blended = g * self._protos[class_id] + (1.0 - g) * batch_mean
        else:
            blended = batch_mean
        self._protos[class_id] = normalize(blended)
        self._has_proto[class_id] = True
        self._version += 1

    # -- reads -----------------------------------------------------------

    def count(self, class_id: int) -> int:
        self._check_class(class_id)
        return self._counts[class_id]

    def prototype(self, class_id: int) -> np.ndarray:
        self._check_class(class_id)
        if not self._has_proto[class_id]:
            raise PrototypeUndefinedError(f"prototype of class {class_id} was never updated")
        return self._protos[class_id].copy()

    def class_embeddings(self, class_id: int) -> np.ndarray:
        """Buffered embeddings of one class, oldest first. Cached per version."""
        self._check_class(class_id)
        key = ("class", class_id, self._version)
        cached = self._view_cache.get(key)
        if cached is not None:
            return cached
        self._view_cache = {k: v for k, v in self._view_cache.items() if k[-1] == self._version}
        n = self._counts[class_id]
        buf = self._bufs[class_id]
        if n < self.capacity:
            view = buf[:n].copy()
        else:
            head = self._heads[class_id]
            view = np.concatenate([buf[head:], buf[:head]], axis=0)
        self._view_cache[key] = view
        return view

    def all_embeddings(self) -> np.ndarray:
        """Every buffered embedding, classes in order, oldest first within a class."""
        key = ("all", self._version)
        cached = self._view_cache.get(key)
        if cached is not None:
            return cached
        parts = [self.class_embeddings(c) for c in range(self.num_classes)]
        out = np.concatenate(parts, axis=0) if parts else np.empty((0, self.dim))
        self._view_cache[key] = out
        return out

    def class_offsets(self) -> np.ndarray:
        """Start offsets of each class inside ``all_embeddings`` (length C + 1)."""
        return np.concatenate([[0], np.cumsum(self._counts)])

    def _sq_norms(self, class_id: int) -> np.ndarray:
        key = ("sq", class_id, self._version)
        cached = self._view_cache.get(key)
        if cached is None:
            emb = self.class_embeddings(class_id)
            cached = np.einsum("ij,ij->i", emb, emb)
            self._view_cache[key] = cached
        return cached

    def knn_distance(self, class_id: int, z: np.ndarray, k: int) -> tuple[float, np.ndarray]:
        """Euclidean distance to the k-th nearest buffered embedding of a class.

        Returns (distance, neighbor). Ties are broken by lower insertion
        index, so results are reproducible under a fixed seed. Selection
        goes through the expansion ||b - z||^2 = ||b||^2 + ||z||^2 - 2 b.z
        (one BLAS matvec instead of a full difference matrix); the
        reported distance is then recomputed directly for the selected
        neighbor.
        """
        if k < 1:
            raise BadArgError(f"k must be >= 1, got {k}")
        emb = self.class_embeddings(class_id)
        n = emb.shape[0]
        if n < k:
            raise InsufficientDataError(
                f"class {class_id} holds {n} embeddings, fewer than k={k}"
            )
        z = np.asarray(z, dtype=float)
        d2 = self._sq_norms(class_id) + float(z @ z) - 2.0 * (emb @ z)
        if k < n:
            kth_value = d2[np.argpartition(d2, k - 1)[k - 1]]
        else:
            kth_value = d2.max()
        # ties share kth_value; pick by insertion order among the tied rows
        below = int(np.count_nonzero(d2 < kth_value))
        tied = np.flatnonzero(d2 == kth_value)
        idx = int(tied[k - 1 - below])
        return float(np.linalg.norm(emb[idx] - z)), emb[idx].copy()

    def adjacent_clusters(self, class_id: int, n_adj: int) -> list[int]:
        """The n_adj classes whose prototypes are most cosine-similar to this one.

        Returned in descending similarity; ties broken by lower class id.
        """
        self._check_class(class_id)
        if not 1 <= n_adj <= self.num_classes - 1:
            raise BadArgError(f"n_adj={n_adj} outside [1, {self.num_classes - 1}]")
        missing = [c for c in range(self.num_classes) if not self._has_proto[c]]
        if missing:
            raise PrototypeUndefinedError(f"prototypes undefined for classes {missing}")
        cos = self._protos @ self._protos[class_id]
        others = np.array([c for c in range(self.num_classes) if c != class_id])
        order = np.lexsort((others, -cos[others]))
        return [int(others[i]) for i in order[:n_adj]]

    def midpoint(self, pair: ClusterPair) -> np.ndarray:
        """Normalized sum of the two prototypes of a cluster pair."""
        mu_u = self.prototype(pair.u)
        mu_v = self.prototype(pair.v)
        s = mu_u + mu_v
        if np.linalg.norm(s) < ANTIPODAL_TOL:
            raise AntipodalPrototypesError(
                f"prototypes of classes {pair.u} and {pair.v} are antipodal"
            )
        return normalize(s)

    # -- snapshots and io --------------------------------------------------

    def snapshot(self) -> "IdStore":
        """Independent deep copy, safe to query while the original mutates."""
        out = IdStore(self.num_classes, self.dim, self.capacity, self.ema_factor)
        out._bufs = [b.copy() for b in self._bufs]
        out._counts = list(self._counts)
        out._heads = list(self._heads)
        out._protos = self._protos.copy()
        out._has_proto = list(self._has_proto)
        return out

    def save(self, path: str | Path) -> None:
        path = Path(path)
        if path.suffix == ".json":
            doc = {
                "num_classes": self.num_classes,
                "dim": self.dim,
                "capacity": self.capacity,
                "ema_factor": self.ema_factor,
                "classes": [
                    {
                        "prototype": self._protos[c].tolist() if self._has_proto[c] else None,
                        "buffer": self.class_embeddings(c).tolist(),
                    }
                    for c in range(self.num_classes)
                ],
            }
            path.write_text(json.dumps(doc))
            return
        chunks = [
            _MAGIC,
            struct.pack("<IIId", self.num_classes, self.dim, self.capacity, self.ema_factor),
        ]
        for c in range(self.num_classes):
            emb = self.class_embeddings(c)
            chunks.append(struct.pack("<IB", emb.shape[0], int(self._has_proto[c])))
            if self._has_proto[c]:
                chunks.append(np.ascontiguousarray(self._protos[c]).tobytes())
            chunks.append(np.ascontiguousarray(emb).tobytes())
        path.write_bytes(b"".join(chunks))

    @classmethod
    def load(cls, path: str | Path) -> "IdStore":
        path = Path(path)
        try:
            if path.suffix == ".json":
                doc = json.loads(path.read_text())
                store = cls(doc["num_classes"], doc["dim"], doc["capacity"], doc["ema_factor"])
                for c, entry in enumerate(doc["classes"]):
                    for row in entry["buffer"]:
                        store.insert(c, np.asarray(row, dtype=float))
                    if entry["prototype"] is not None:
                        store._protos[c] = np.asarray(entry["prototype"], dtype=float)
                        store._has_proto[c] = True
                return store
            raw = path.read_bytes()
            if raw[: len(_MAGIC)] != _MAGIC:
                raise CorruptStoreError(f"{path} is not an id-store file")
            off = len(_MAGIC)
            num_classes, dim, capacity, gamma = struct.unpack_from("<IIId", raw, off)
            off += struct.calcsize("<IIId")
            store = cls(num_classes, dim, capacity, gamma)
            for c in range(num_classes):
                n_c, has_proto = struct.unpack_from("<IB", raw, off)
                off += struct.calcsize("<IB")
                if has_proto:
                    store._protos[c] = np.frombuffer(raw, dtype="<f8", count=dim, offset=off)
                    store._has_proto[c] = True
                    off += dim * 8
                rows = np.frombuffer(raw, dtype="<f8", count=n_c * dim, offset=off)
                off += n_c * dim * 8
                for row in rows.reshape(n_c, dim):
                    store.insert(c, row)
            return store
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, struct.error) as err:
            raise CorruptStoreError(f"cannot read id-store file {path}: {err}") from err
