"""Class-level height priors.

A prior file is JSON of the form::

    {"classes": [{"id": 0, "name": "bottle",
                  "bins": [{"height_m": 0.30, "prob": 1.0}]}]}
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import MalformedPrior, UnknownClass

SUM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class HeightHistogram:
    class_id: int
    class_name: str
    bins: tuple  # ((height_m, prob), ...)

    @property
    def heights(self) -> np.ndarray:
        return np.array([h for h, _ in self.bins])

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.bins])


class PriorRegistry(Mapping):
    """Immutable map from class id to :class:`HeightHistogram`."""

    def __init__(self, histograms=()):
        table = {}
        for h in histograms:
            if h.class_id in table:
                raise MalformedPrior(f"duplicate class id {h.class_id}")
            table[h.class_id] = h
        self._table = MappingProxyType(table)

    def __getitem__(self, class_id):
        return self._table[class_id]

    def __iter__(self):
        return iter(self._table)

    def __len__(self):
        return len(self._table)

    def __repr__(self):
        return f"PriorRegistry({sorted(self._table)})"


def make_histogram(class_id: int, name: str, bins) -> HeightHistogram:
    """Validate one class entry; renormalize if the sum is within tolerance of 1."""
    bins = [(float(h), float(p)) for h, p in bins]
    if not bins:
        raise MalformedPrior(f"class {class_id} has no bins")
    for h, p in bins:
        if not (math.isfinite(h) and h > 0):
            raise MalformedPrior(f"class {class_id}: non-positive height {h}")
        if not (math.isfinite(p) and p >= 0):
            raise MalformedPrior(f"class {class_id}: negative probability {p}")
    heights = [h for h, _ in bins]
    if any(b <= a for a, b in zip(heights, heights[1:])):
        raise MalformedPrior(f"class {class_id}: heights must be strictly increasing")
    total = math.fsum(p for _, p in bins)
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise MalformedPrior(f"class {class_id}: probabilities sum to {total}")
    if total != 1.0:
        bins = [(h, p / total) for h, p in bins]
    return HeightHistogram(int(class_id), str(name), tuple(bins))


def load_priors(source) -> PriorRegistry:
    """Build a registry from a parsed document, a JSON string, or a file path."""
    if isinstance(source, Path):
        source = json.loads(source.read_text(encoding="utf-8"))
    elif isinstance(source, str):
        source = json.loads(source)
    try:
        entries = source["classes"]
        hists = [
            make_histogram(
                c["id"],
                c.get("name", str(c["id"])),
                [(b["height_m"], b["prob"]) for b in c["bins"]],
            )
            for c in entries
        ]
    except (KeyError, TypeError) as exc:
        raise MalformedPrior(f"prior document is missing a field: {exc}") from exc
    return PriorRegistry(hists)


def dump_priors(reg: PriorRegistry) -> dict:
    return {
        "classes": [
            {
                "id": h.class_id,
                "name": h.class_name,
                "bins": [{"height_m": hm, "prob": p} for hm, p in h.bins],
            }
            for h in reg.values()
        ]
    }


def lookup(reg: PriorRegistry, class_id) -> HeightHistogram:
    try:
        return reg[class_id]
    except KeyError:
        raise UnknownClass(f"no height prior for class {class_id}") from None
