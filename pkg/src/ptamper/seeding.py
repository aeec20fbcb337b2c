"""Deterministic seed derivation for independent random streams.

A stream seed is the first 8 bytes (big endian) of
``SHA-256(str(master) + "/" + "/".join(repr(label) for label in labels))``.
Labels are strings or integers; ``repr`` keeps ``"1"`` and ``1`` distinct.
"""

from __future__ import annotations

import hashlib
import random
from collections.abc import Sequence
from typing import Union

DEFAULT_MASTER_SEED = 0

Label = Union[str, int]


def derive_seed(master_seed: int, labels: Sequence[Label]) -> int:
    for lab in labels:
        if not isinstance(lab, (str, int)) or isinstance(lab, bool):
            raise TypeError(f"seed labels must be str or int, got {type(lab).__name__}")
    text = f"{int(master_seed)}/" + "/".join(repr(lab) for lab in labels)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def stream(master_seed: int, *labels: Label) -> random.Random:
    return random.Random(derive_seed(master_seed, labels))
