"""Counter-based randomness.

Built on numpy's Philox bit generator: a (seed, counter) pair addresses a
stream directly, so draw k never requires replaying draws 0..k-1 and the
same pair gives the same values on every platform. Used for parameter
init, masking decisions, and synthetic data generation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Rng:
    seed: int
    counter: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed, counter=self.counter))

    def at(self, counter: int) -> "Rng":
        """Stream addressed by an absolute counter under the same seed."""
        return Rng(self.seed, counter)

    def derive(self, *tags: int) -> "Rng":
        """Sub-stream keyed by small integer tags (fits the 64-bit counter)."""
        c = self.counter
        for t in tags:
            c = (c * 1000003 + int(t) + 1) % (1 << 63)
        return Rng(self.seed, c)
