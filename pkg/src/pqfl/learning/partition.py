"""Cycle-m label partitioner.

Client ``i`` of ``n`` is assigned the m-class window
``{(i + j) mod C : 0 <= j < m}``; samples of each class are split evenly
among the clients claiming that class, with the remainder going to the
lowest-index claimant. ``m = 1`` is the extreme non-IID split, ``m = C``
gives every client all classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import Dataset


@dataclass(frozen=True)
class PartitionSpec:
    n_clients: int
    m: int
    n_classes: int
    assignment: tuple  # per-client int64 index arrays, read-only

    def classes_of(self, client: int) -> tuple[int, ...]:
        """The label classes client ``client`` is entitled to."""
        return tuple(
            (client + j) % self.n_classes for j in range(self.m)
        )

    def shard(self, dataset: Dataset, client: int) -> Dataset:
        return dataset.take(self.assignment[client])

    def class_histogram(self, dataset: Dataset) -> np.ndarray:
        """(n_clients, C) matrix of per-client label counts."""
        hist = np.zeros((self.n_clients, self.n_classes), dtype=np.int64)
        for i, idx in enumerate(self.assignment):
            hist[i] = np.bincount(dataset.labels[idx], minlength=self.n_classes)
        return hist


def cycle_m_partition(dataset: Dataset, n_clients: int, m: int) -> PartitionSpec:
    """Deterministic cycle-m split of ``dataset`` across ``n_clients``.

    Samples whose class no client claims (possible when ``n_clients + m - 1
    < C``) are left unassigned. Assignments are disjoint by construction.
    """
    C = dataset.n_classes
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    if not 1 <= m <= C:
        raise ValueError(f"m must be in [1, {C}], got {m}")

    per_client: list[list[np.ndarray]] = [[] for _ in range(n_clients)]
    for c in range(C):
        claimants = [i for i in range(n_clients) if (c - i) % C < m]
        if not claimants:
            continue
        class_idx = np.flatnonzero(dataset.labels == c)
        # array_split gives the leading chunks the extra samples, which is
        # exactly the lowest-index-claimant remainder rule (claimants are
        # ascending).
        for client, chunk in zip(claimants, np.array_split(class_idx, len(claimants))):
            if chunk.size:
                per_client[client].append(chunk)

    assignment = []
    for chunks in per_client:
        idx = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
        idx.setflags(write=False)
        assignment.append(idx)
    return PartitionSpec(n_clients=n_clients, m=m, n_classes=C, assignment=tuple(assignment))
