"""Seedable random streams for parallel replications.

Replications of an experiment use distinct ``stream_id`` values under a
shared ``seed``; an estimator that needs several internally independent
sources derives them with :meth:`RngStream.generator` sub-keys.  Identical
(seed, stream_id, sub) triples reproduce identical draw sequences.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def generator(self, sub: int = 0) -> np.random.Generator:
        """Fresh generator keyed by (seed, stream_id, sub)."""
        return np.random.default_rng([self.seed, self.stream_id, sub])

    def substream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)
