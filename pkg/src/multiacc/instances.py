"""Fixed structure sets used by the acceptance suite and the sweep scripts."""

from __future__ import annotations

from . import pairing as pr


def merge_instances() -> dict:
    """Small structure sets over ``1..8`` with well-separated correlations.

    ``"m2"``: 15 and 9 pairings, overlap 3.  ``"m3"``: three 9-pairing block
    structures with pairwise overlap 1.
    """
    full = pr.full_structure
    return {
        "m2": [pr.product(full(range(1, 7)), pr.base(7, 8)), pr.block_structure(8)],
        "m3": [
            pr.product(full([1, 2, 3, 4]), full([5, 6, 7, 8])),
            pr.product(full([1, 2, 5, 6]), full([3, 4, 7, 8])),
            pr.product(full([1, 2, 7, 8]), full([3, 4, 5, 6])),
        ],
    }
