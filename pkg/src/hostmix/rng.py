"""Random streams.

Every trajectory owns a Philox4x64 counter-based generator.  Ensemble run
``k`` of base seed ``s`` uses the 64-bit seed
``SeedSequence([s, k]).generate_state(1, uint64)[0]``, so any run can be
reproduced on its own and results never depend on execution order.
"""

import numpy as np


def derive_seed(base_seed: int, index: int) -> int:
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))
