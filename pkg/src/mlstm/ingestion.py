"""Edit logs -> per-user sequences -> the three aspect streams fed to the model.

Edit log format: one JSON object per line with keys ``user_id`` (str),
``page_id`` (int), ``title`` (str), ``categories`` (list of str),
``timestamp`` (UTC seconds) and ``reverted`` (bool). Labels are a two-column
TSV, ``user_id<TAB>label`` with label ``vandal`` or ``benign``.
"""
from __future__ import annotations

import hashlib
import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .embeddings import embed_text
from .errors import LabelError, ParseError
from .numerics import DTYPE, SeededRng

VANDAL = "vandal"
BENIGN = "benign"
# Class indices used by the classifier; vandal is the positive class.
CLASS_INDEX = {BENIGN: 0, VANDAL: 1}

N_ASPECTS = 3
ASPECT_NAMES = ("title", "category", "revert")
REVERT_DIM = 2

META_MARKERS = ("User:", "Talk:", "User talk:", "Wikipedia:")

EDIT_KEYS = ("user_id", "page_id", "title", "categories", "timestamp", "reverted")


@dataclass(frozen=True)
class EditRecord:
    user_id: str
    page_id: int
    title: str
    categories: tuple
    timestamp: float
    reverted: bool

    def to_json(self):
        return json.dumps(
            {
                "user_id": self.user_id,
                "page_id": self.page_id,
                "title": self.title,
                "categories": list(self.categories),
                "timestamp": self.timestamp,
                "reverted": self.reverted,
            },
            ensure_ascii=False,
        )


@dataclass
class UserSequence:
    user_id: str
    label: str
    edits: list = field(default_factory=list)

    @property
    def T(self):
        return len(self.edits)

    @property
    def first_timestamp(self):
        return self.edits[0].timestamp


@dataclass
class AspectSequences:
    """Per-user inputs: one (T, d_m) array per aspect, all with the same T."""

    user_id: str
    label: str
    aspects: tuple

    @property
    def T(self):
        return self.aspects[0].shape[0]

    @property
    def y(self):
        return CLASS_INDEX[self.label]

    @property
    def input_dims(self):
        return tuple(a.shape[1] for a in self.aspects)

    def prefix(self, t):
        return AspectSequences(self.user_id, self.label, tuple(a[:t] for a in self.aspects))


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def parse_edit_line(line, lineno=None, source=None):
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", lineno, source) from None
    if not isinstance(obj, dict):
        raise ParseError("expected a JSON object", lineno, source)
    for key in EDIT_KEYS:
        if key not in obj:
            raise ParseError(f"missing key {key!r}", lineno, source)
    user_id, page_id, title = obj["user_id"], obj["page_id"], obj["title"]
    categories, timestamp, reverted = obj["categories"], obj["timestamp"], obj["reverted"]
    if not isinstance(user_id, str):
        raise ParseError("user_id must be a string", lineno, source)
    if not _is_int(page_id):
        raise ParseError("page_id must be an integer", lineno, source)
    if not isinstance(title, str):
        raise ParseError("title must be a string", lineno, source)
    if not title:
        raise ParseError("title is empty", lineno, source)
    if not isinstance(categories, list) or not all(isinstance(c, str) for c in categories):
        raise ParseError("categories must be a list of strings", lineno, source)
    if not _is_number(timestamp) or not np.isfinite(timestamp):
        raise ParseError("timestamp must be a number", lineno, source)
    if timestamp < 0:
        raise ParseError("timestamp is negative", lineno, source)
    if not isinstance(reverted, bool):
        raise ParseError("reverted must be a boolean", lineno, source)
    return EditRecord(user_id, page_id, title, tuple(categories), timestamp, reverted)


def parse_edit_log(lines, source=None):
    """Parse line-delimited JSON edits in file order. Blank lines are skipped."""
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        records.append(parse_edit_line(line, lineno, source))
    return records


def read_edit_log(path):
    with open(path, encoding="utf-8") as fh:
        return parse_edit_log(fh, source=str(path))


def write_edit_log(records, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def parse_labels(lines, source=None):
    labels = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError("expected user_id<TAB>label", lineno, source)
        user_id, label = parts
        if lineno == 1 and (user_id, label) == ("user_id", "label"):
            continue
        if label not in CLASS_INDEX:
            raise ParseError(f"unknown label {label!r}", lineno, source)
        labels[user_id] = label
    return labels


def read_labels(path):
    with open(path, encoding="utf-8") as fh:
        return parse_labels(fh, source=str(path))


def write_labels(labels, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for user_id in sorted(labels):
            fh.write(f"{user_id}\t{labels[user_id]}\n")


def is_meta_title(title):
    return any(marker in title for marker in META_MARKERS)


def filter_meta_edits(records):
    """Drop edits on user, talk and project pages, keeping order."""
    return [r for r in records if not is_meta_title(r.title)]


def group_into_user_sequences(records, labels):
    """Group edits per user, sorted by timestamp (stable); output ordered by user_id.

    ``labels=None`` builds unlabeled sequences (label None) for scoring.
    """
    by_user = defaultdict(list)
    for rec in records:
        by_user[rec.user_id].append(rec)
    out = []
    for user_id in sorted(by_user):
        if labels is None:
            label = None
        elif user_id in labels:
            label = labels[user_id]
        else:
            raise LabelError(f"no label for user {user_id!r}")
        edits = sorted(by_user[user_id], key=lambda r: r.timestamp)
        out.append(UserSequence(user_id, label, edits))
    return out


def revert_vector(reverted):
    return np.array([0.0, 1.0] if reverted else [1.0, 0.0], dtype=DTYPE)


def edit_aspect_vectors(edit, store):
    """The three per-edit input vectors: title, categories, revert one-hot."""
    return (
        embed_text(store, edit.title),
        embed_text(store, " ".join(edit.categories)),
        revert_vector(edit.reverted),
    )


def build_aspect_sequences(user, store):
    rows = [edit_aspect_vectors(e, store) for e in user.edits]
    aspects = tuple(np.stack([r[m] for r in rows]) for m in range(N_ASPECTS))
    return AspectSequences(user.user_id, user.label, aspects)


def chronological_split(users, cutoff_timestamp):
    """Whole users go to train iff their first edit is at or before the cutoff."""
    train = [u for u in users if u.first_timestamp <= cutoff_timestamp]
    test = [u for u in users if u.first_timestamp > cutoff_timestamp]
    return train, test


# --- synthetic data -------------------------------------------------------

SYNTH_START = 1356998400  # 2013-01-01T00:00:00Z
SYNTH_CUTOFF = 1380585599  # 2013-09-30T23:59:59Z, end of month 9
SYNTH_END = 1406851199  # 2014-07-31T23:59:59Z, end of month 19

POOL_SIZE = 30


def _title_word(i):
    return f"topic{i:03d}"


def _category_word(i):
    return f"genre{i:03d}"


def _pool_range(label, separability):
    # Vandal pool starts at 0, benign pool is shifted right; disjoint at separability=1.
    shift = int(round(separability * POOL_SIZE))
    start = 0 if label == VANDAL else shift
    return start, start + POOL_SIZE


def _page_id(title):
    return int.from_bytes(hashlib.blake2b(title.encode(), digest_size=4).digest(), "little")


def gen_synthetic(n_users, mean_T, separability, seed):
    """Balanced synthetic users whose revert rates and topics depend on the label.

    Vandals get reverted with probability ``0.1 + 0.8 * separability``,
    benign users with 0.1. Titles and categories are drawn from word pools
    that coincide at separability 0 and are disjoint at 1. Sequence lengths
    are ``1 + Poisson(mean_T - 1)``. First edits fall uniformly in a 19-month
    window starting 2013-01-01.
    """
    if n_users <= 0:
        raise ValueError("n_users must be positive")
    if mean_T < 1:
        raise ValueError("mean_T must be at least 1")
    if not 0.0 <= separability <= 1.0:
        raise ValueError("separability must lie in [0, 1]")
    rng = SeededRng(seed)
    n_vandal = n_users // 2
    labels = [VANDAL] * n_vandal + [BENIGN] * (n_users - n_vandal)
    labels = [labels[i] for i in rng.permutation(n_users)]
    width = len(str(n_users - 1))
    users = []
    for idx, label in enumerate(labels):
        user_id = f"u{idx:0{width}d}"
        p_revert = 0.1 + 0.8 * separability if label == VANDAL else 0.1
        lo, hi = _pool_range(label, separability)
        T = 1 + int(rng.poisson(mean_T - 1))
        t = float(rng.integers(SYNTH_START, SYNTH_END - 86400 * 30))
        edits = []
        for _ in range(T):
            n_words = int(rng.integers(1, 4))
            title = " ".join(_title_word(int(w)) for w in rng.integers(lo, hi, n_words))
            n_cats = int(rng.integers(0, 3))
            cats = tuple(
                " ".join(_category_word(int(w)) for w in rng.integers(lo, hi, int(rng.integers(1, 3))))
                for _ in range(n_cats)
            )
            reverted = bool(rng.random() < p_revert)
            edits.append(EditRecord(user_id, _page_id(title), title.title(), cats, t, reverted))
            t += float(rng.integers(60, 86400))
        users.append(UserSequence(user_id, label, edits))
    return users


def synthetic_vocabulary(dim, seed):
    """Word vectors for every synthetic pool word.

    Word ``i`` sits at ``(i / pool_extent - 0.5)`` along one random unit
    direction plus small isotropic noise, so nearby pool indices get nearby
    vectors.
    """
    rng = SeededRng(seed).spawn(7919)
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    extent = 2 * POOL_SIZE
    vocab = {}
    for make_word in (_title_word, _category_word):
        for i in range(extent):
            vec = (i / extent - 0.5) * direction + rng.normal(0.0, 0.05, dim)
            vocab[make_word(i)] = vec.astype(DTYPE)
    return vocab


def write_word_vectors(vocab, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for word in sorted(vocab):
            fh.write(word + " " + " ".join(repr(float(v)) for v in vocab[word]) + "\n")
