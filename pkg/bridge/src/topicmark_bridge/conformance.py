"""Provider conformance checklist.

The same checks run against an in-process model and against its
remote-wrapped twin, so protocol transport can never change observable
provider behavior.
"""

from __future__ import annotations

import numpy as np


def run_provider_conformance(provider, contexts=None) -> None:
    """Assert the LogitProvider contract; raises AssertionError on violation.

    Checks: a positive integral vocab_size; per-call vector length and
    finiteness; determinism for repeated contexts; rejection of empty
    context.
    """
    assert isinstance(provider.vocab_size, int) and provider.vocab_size > 0

    if contexts is None:
        v = provider.vocab_size
        contexts = [[0], [v - 1], [0, 1 % v, 2 % v], [3 % v] * 7]

    for ctx in contexts:
        first = np.asarray(provider.next_logits(list(ctx)))
        assert first.shape == (provider.vocab_size,), (
            f"context {ctx}: got shape {first.shape}, expected ({provider.vocab_size},)"
        )
        assert np.all(np.isfinite(first)), f"context {ctx}: non-finite logits"
        second = np.asarray(provider.next_logits(list(ctx)))
        assert np.array_equal(first, second), f"context {ctx}: provider is not deterministic"

    rejected = False
    try:
        provider.next_logits([])
    except Exception:
        rejected = True
    assert rejected, "provider accepted an empty context"
