"""Question records, JSONL I/O, vocabulary, input encoding, synthetic corpora
and stratified splits."""

from __future__ import annotations

import json
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DIFFICULTY_LABELS = ("difficult", "easy", "medium")
BLOOM_LABELS = ("analyzing", "applying", "remembering", "understanding")
LABEL_SETS = {"difficulty": DIFFICULTY_LABELS, "bloom": BLOOM_LABELS}

PAD, UNK, CLS, SEP = 0, 1, 2, 3
SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]")

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class DataError(ValueError):
    """Malformed input data or a closed-set label violation."""


def tokenize(text):
    """Lowercase word tokens; whitespace and punctuation are separators."""
    return _TOKEN_RE.findall(text.lower())


def _check_label(task, value, where):
    if value is None:
        return None
    if not isinstance(value, str):
        raise DataError(f"{where}: {task} label must be a string, got {value!r}")
    label = value.strip().lower()
    if label not in LABEL_SETS[task]:
        raise DataError(f"{where}: unknown {task} label {value!r}")
    return label


@dataclass(frozen=True)
class QuestionRecord:
    question: str
    answer: str | None = None
    difficulty: str | None = None
    bloom: str | None = None
    # extra JSONL fields carried through untouched by the core (e.g. bloom_probs)
    extras: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if not isinstance(self.question, str) or not self.question.strip():
            raise DataError("question must be a non-empty string")
        object.__setattr__(self, "difficulty", _check_label("difficulty", self.difficulty, "record"))
        object.__setattr__(self, "bloom", _check_label("bloom", self.bloom, "record"))

    def label(self, task):
        return self.difficulty if task == "difficulty" else self.bloom

    def to_json(self):
        obj = {"question": self.question}
        if self.answer is not None:
            obj["answer"] = self.answer
        if self.difficulty is not None:
            obj["difficulty"] = self.difficulty
        if self.bloom is not None:
            obj["bloom"] = self.bloom
        for key, value in self.extras:
            obj[key] = value
        return obj


def _inventory(task, records, closed):
    present = {r.label(task) for r in records if r.label(task) is not None}
    if closed:
        present |= set(LABEL_SETS[task])
    return tuple(sorted(present))


@dataclass(frozen=True)
class Dataset:
    """Ordered records plus alphabetical label inventories.

    With ``closed=True`` (the default) the inventories always hold the full
    closed label sets, so class indices are stable across datasets.
    """

    records: tuple
    difficulty_labels: tuple = ()
    bloom_labels: tuple = ()

    @classmethod
    def from_records(cls, records, closed=True):
        records = tuple(records)
        return cls(
            records,
            _inventory("difficulty", records, closed),
            _inventory("bloom", records, closed),
        )

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def labels(self, task):
        return self.difficulty_labels if task == "difficulty" else self.bloom_labels

    def subset(self, indices):
        return Dataset(
            tuple(self.records[i] for i in indices),
            self.difficulty_labels,
            self.bloom_labels,
        )

    def replace_records(self, records):
        return Dataset(tuple(records), self.difficulty_labels, self.bloom_labels)


def load_jsonl(path):
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            where = f"{path}:{lineno}"
            question = obj.get("question")
            if not isinstance(question, str) or not question.strip():
                raise DataError(f"{where}: missing or empty 'question'")
            answer = obj.get("answer")
            if answer is not None and not isinstance(answer, str):
                raise DataError(f"{where}: 'answer' must be a string")
            extras = ()
            if "bloom_probs" in obj:
                extras = (("bloom_probs", obj["bloom_probs"]),)
            records.append(
                QuestionRecord(
                    question=question,
                    answer=answer,
                    difficulty=_check_label("difficulty", obj.get("difficulty"), where),
                    bloom=_check_label("bloom", obj.get("bloom"), where),
                    extras=extras,
                )
            )
    return Dataset.from_records(records)


def save_jsonl(dataset, path):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in dataset:
            fh.write(json.dumps(rec.to_json(), ensure_ascii=False, sort_keys=False))
            fh.write("\n")


# --------------------------------------------------------------------------
# vocabulary and encoding


def label_words():
    words = set()
    for labels in LABEL_SETS.values():
        for label in labels:
            words.update(tokenize(label))
    return sorted(words)


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple

    def __post_init__(self):
        object.__setattr__(self, "token_to_id", {t: i for i, t in enumerate(self.tokens)})

    @property
    def size(self):
        return len(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.token_to_id

    def lookup(self, token):
        return self.token_to_id.get(token, UNK)


def build_vocab(dataset, max_size):
    """Keep the ``max_size - 4`` most frequent corpus words, then force in
    any label-name word that did not make the cut."""
    forced = label_words()
    if max_size < len(SPECIAL_TOKENS) + len(forced):
        raise ValueError(
            f"max_size must be >= {len(SPECIAL_TOKENS) + len(forced)}, got {max_size}"
        )
    counts = Counter()
    for rec in dataset:
        counts.update(tokenize(rec.question))
        if rec.answer:
            counts.update(tokenize(rec.answer))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [w for w, _ in ranked[: max_size - len(SPECIAL_TOKENS)]]
    have = set(kept)
    tokens = list(SPECIAL_TOKENS) + kept + [w for w in forced if w not in have]
    return Vocabulary(tuple(tokens))


@dataclass(frozen=True)
class TokenSequence:
    ids: np.ndarray
    mask: np.ndarray

    @property
    def true_length(self):
        return int(self.mask.sum())

    def __len__(self):
        return len(self.ids)


def encode_input(vocab, question, answer=None, max_len=64):
    """``[CLS] q [SEP] a [SEP]`` (or ``[CLS] q [SEP]``), right-truncated and
    padded to ``max_len``."""
    if max_len < 3:
        raise ValueError("max_len must be >= 3")
    ids = [CLS] + [vocab.lookup(t) for t in tokenize(question)] + [SEP]
    if answer is not None:
        ids += [vocab.lookup(t) for t in tokenize(answer)] + [SEP]
    ids = ids[:max_len]
    n = len(ids)
    out = np.full(max_len, PAD, dtype=np.int64)
    out[:n] = ids
    mask = np.zeros(max_len, dtype=np.int8)
    mask[:n] = 1
    return TokenSequence(out, mask)


def encode_dataset(vocab, dataset, max_len):
    """Stack encoded inputs into (ids, mask) arrays of shape [n, max_len]."""
    n = len(dataset)
    ids = np.full((n, max_len), PAD, dtype=np.int64)
    mask = np.zeros((n, max_len), dtype=np.int8)
    for i, rec in enumerate(dataset):
        seq = encode_input(vocab, rec.question, rec.answer, max_len)
        ids[i] = seq.ids
        mask[i] = seq.mask
    return ids, mask


def label_indices(dataset, task, require=True):
    """Class indices for ``task``; -1 where missing unless ``require``."""
    inventory = dataset.labels(task)
    index = {lab: i for i, lab in enumerate(inventory)}
    out = np.full(len(dataset), -1, dtype=np.int64)
    for i, rec in enumerate(dataset):
        lab = rec.label(task)
        if lab is None:
            if require:
                raise DataError(f"record {i}: missing {task} label")
            continue
        out[i] = index[lab]
    return out


# --------------------------------------------------------------------------
# synthetic corpus

BLOOM_CUES = {
    "remembering": ("define", "list", "state", "name", "recall"),
    "understanding": ("explain", "describe", "summarize", "interpret", "classify"),
    "applying": ("apply", "calculate", "solve", "compute", "use"),
    "analyzing": ("analyze", "compare", "differentiate", "contrast", "examine"),
}
DIFFICULTY_CUES = {"easy": "basic", "medium": "standard", "difficult": "advanced"}
BLOOM_TO_DIFFICULTY = {
    "remembering": "easy",
    "understanding": "medium",
    "applying": "medium",
    "analyzing": "difficult",
}
FILLER_WORDS = (
    "atom", "cell", "energy", "force", "mass", "plant", "acid", "base", "light",
    "water", "heat", "metal", "motion", "wave", "current", "circuit", "carbon",
    "oxygen", "enzyme", "tissue", "orbit", "planet", "magnet", "charge", "gas",
    "liquid", "solid", "reaction", "element", "compound", "lens", "sound",
    "pressure", "density", "friction", "gravity", "soil", "root", "leaf", "seed",
    "the", "of", "a", "in", "and", "for", "with", "between", "its", "this",
)


@dataclass(frozen=True)
class SyntheticConfig:
    n_samples: int = 2000
    assoc_strength: float = 0.9
    cue_noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 0:
            raise ValueError("n_samples must be >= 0")
        if not 0.0 <= self.assoc_strength <= 1.0:
            raise ValueError("assoc_strength must lie in [0, 1]")
        if not 0.0 <= self.cue_noise <= 1.0:
            raise ValueError("cue_noise must lie in [0, 1]")


def generate_synthetic(config):
    """Bloom-cued synthetic questions whose difficulty depends on the Bloom
    level with strength ``assoc_strength``.

    Difficulty given Bloom is ``rho * onehot(mapping) + (1 - rho) * uniform``.
    The leading verb and the difficulty cue word are correct with
    probability ``1 - cue_noise`` and drawn uniformly from all cues otherwise.
    """
    rng = np.random.default_rng(config.seed)
    rho = config.assoc_strength
    all_verbs = tuple(v for level in BLOOM_LABELS for v in BLOOM_CUES[level])
    diff_cues = tuple(DIFFICULTY_CUES[d] for d in DIFFICULTY_LABELS)
    records = []
    for _ in range(config.n_samples):
        bloom = BLOOM_LABELS[rng.integers(len(BLOOM_LABELS))]
        if rng.random() < rho:
            difficulty = BLOOM_TO_DIFFICULTY[bloom]
        else:
            difficulty = DIFFICULTY_LABELS[rng.integers(len(DIFFICULTY_LABELS))]

        if rng.random() < config.cue_noise:
            verb = all_verbs[rng.integers(len(all_verbs))]
        else:
            cues = BLOOM_CUES[bloom]
            verb = cues[rng.integers(len(cues))]
        if rng.random() < config.cue_noise:
            dcue = diff_cues[rng.integers(len(diff_cues))]
        else:
            dcue = DIFFICULTY_CUES[difficulty]

        head = [FILLER_WORDS[k] for k in rng.integers(len(FILLER_WORDS), size=rng.integers(2, 6))]
        tail = [FILLER_WORDS[k] for k in rng.integers(len(FILLER_WORDS), size=rng.integers(1, 5))]
        question = " ".join([verb, "the"] + head + [dcue] + tail)
        answer = " ".join(
            FILLER_WORDS[k] for k in rng.integers(len(FILLER_WORDS), size=rng.integers(1, 4))
        )
        records.append(QuestionRecord(question, answer, difficulty, bloom))
    return Dataset.from_records(records)


# --------------------------------------------------------------------------
# splits


def _largest_remainder(total, fractions):
    raw = np.asarray(fractions, dtype=np.float64) * total
    base = np.floor(raw).astype(np.int64)
    short = int(total - base.sum())
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return base


def stratified_split(dataset, fractions=(0.8, 0.1, 0.1), seed=0):
    """Partition by difficulty class so every class keeps its proportions
    within one record, and the overall part sizes match the fractions.

    Records without a difficulty label form their own stratum.
    """
    fractions = tuple(float(f) for f in fractions)
    if any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be positive and sum to 1, got {fractions}")
    n_parts = len(fractions)
    rng = np.random.default_rng(seed)
    if len(dataset) == 0:
        return tuple(dataset.subset([]) for _ in fractions)

    strata = {}
    for i, rec in enumerate(dataset):
        strata.setdefault(rec.difficulty or "", []).append(i)
    keys = sorted(strata)
    for key in keys:
        if len(strata[key]) < n_parts:
            warnings.warn(
                f"class {key or '<unlabeled>'!r} has {len(strata[key])} records for "
                f"{n_parts} parts; assigning greedily",
                stacklevel=2,
            )

    targets = _largest_remainder(len(dataset), fractions)
    raw = np.array([[len(strata[k]) * f for f in fractions] for k in keys])
    alloc = np.floor(raw).astype(np.int64)
    deficit = targets - alloc.sum(axis=0)
    frac = raw - alloc
    # hand out leftover records: at most one extra per (class, part) cell,
    # always to the part still missing the most records
    leftover = np.array([len(strata[k]) for k in keys], dtype=np.int64) - alloc.sum(axis=1)
    for ci in np.argsort(-leftover, kind="stable"):
        for _ in range(int(leftover[ci])):
            cand = [p for p in range(n_parts) if alloc[ci, p] == np.floor(raw[ci, p])]
            if not cand:
                cand = list(range(n_parts))
            p = max(cand, key=lambda q: (deficit[q], frac[ci, q], -q))
            alloc[ci, p] += 1
            deficit[p] -= 1

    parts = [[] for _ in range(n_parts)]
    for ci, key in enumerate(keys):
        idx = np.array(strata[key])
        idx = idx[rng.permutation(len(idx))]
        start = 0
        for p in range(n_parts):
            parts[p].extend(idx[start:start + alloc[ci, p]].tolist())
            start += alloc[ci, p]
    return tuple(dataset.subset(sorted(part)) for part in parts)
