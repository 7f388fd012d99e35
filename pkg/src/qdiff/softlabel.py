"""Transfer predicted Bloom labels onto a dataset, or label it at random."""

from __future__ import annotations

import dataclasses

import numpy as np

from .data import BLOOM_LABELS
from .model import predict_arrays

BATCH = 256


def soft_label(model, dataset, overwrite=False, with_probs=False):
    """Fill missing Bloom labels (all of them with ``overwrite``) with the
    model's argmax prediction. Difficulty labels are left alone.

    With ``with_probs`` every relabelled record also carries a
    ``bloom_probs`` mapping label -> probability.
    """
    todo = [i for i, rec in enumerate(dataset) if overwrite or rec.bloom is None]
    records = list(dataset)
    if not todo:
        return dataset
    ids, mask = model.encode(dataset.subset(todo))
    inv = model.bloom_labels
    for start in range(0, len(todo), BATCH):
        probs, _ = predict_arrays(model, ids[start:start + BATCH], mask[start:start + BATCH])
        for j, p in enumerate(probs["bloom"]):
            i = todo[start + j]
            rec = records[i]
            extras = tuple(kv for kv in rec.extras if kv[0] != "bloom_probs")
            if with_probs:
                extras += (("bloom_probs", dict(zip(inv, (round(float(x), 6) for x in p)))),)
            records[i] = dataclasses.replace(rec, bloom=inv[int(np.argmax(p))], extras=extras)
    return dataset.replace_records(records)


def random_label(dataset, seed=0):
    """Every record gets a Bloom label drawn uniformly from the closed set."""
    rng = np.random.default_rng(seed)
    draws = rng.integers(len(BLOOM_LABELS), size=len(dataset))
    return dataset.replace_records(
        dataclasses.replace(rec, bloom=BLOOM_LABELS[k]) for rec, k in zip(dataset, draws)
    )
