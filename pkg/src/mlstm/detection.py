"""Batch and streaming vandal detection plus the evaluation metrics.

Verdicts use a strict threshold: a user is flagged when P(vandal) > tau.
In streaming mode the flag latches at the first crossing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ingestion import CLASS_INDEX, VANDAL, edit_aspect_vectors
from .model import attention_fuse, classify, forward_user, lstm_step
from .numerics import DTYPE

VANDAL_CLASS = CLASS_INDEX[VANDAL]
TAU_GRID = (0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass(frozen=True)
class DetectionConfig:
    tau: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie strictly between 0 and 1, got {self.tau}")


def _as_config(cfg):
    if cfg is None:
        return DetectionConfig()
    if isinstance(cfg, DetectionConfig):
        return cfg
    return DetectionConfig(float(cfg))


def predict_user(params, aspects, cfg=None):
    """``(P(vandal), is_vandal)`` from the full sequence."""
    cfg = _as_config(cfg)
    prob = float(forward_user(aspects, params).probs[VANDAL_CLASS])
    return prob, prob > cfg.tau


@dataclass(frozen=True)
class StreamState:
    """Running per-user state; ``hs`` and ``cs`` are (M, h) arrays."""

    hs: np.ndarray
    cs: np.ndarray
    t: int = 0
    flagged_at: int | None = None
    last_prob: float | None = None

    @classmethod
    def initial(cls, params):
        shape = (params.n_aspects, params.hidden)
        return cls(np.zeros(shape, dtype=DTYPE), np.zeros(shape, dtype=DTYPE))

    @property
    def flagged(self):
        return self.flagged_at is not None


def stream_step_vectors(state, xs, params, cfg=None):
    """Advance the stream by one edit given its per-aspect input vectors."""
    cfg = _as_config(cfg)
    hs = np.empty_like(state.hs)
    cs = np.empty_like(state.cs)
    for m, (x, p) in enumerate(zip(xs, params.lstm)):
        hs[m], cs[m], _ = lstm_step(np.asarray(x, dtype=DTYPE), state.hs[m], state.cs[m], p)
    s, _, _ = attention_fuse(hs, params.attention)
    prob = float(classify(s, params.classifier)[VANDAL_CLASS])
    t = state.t + 1
    flagged_at = state.flagged_at
    if flagged_at is None and prob > cfg.tau:
        flagged_at = t
    return StreamState(hs, cs, t, flagged_at, prob), prob, flagged_at is not None


def stream_step(state, edit, params, store, cfg=None):
    """Consume one EditRecord; returns ``(new_state, P(vandal), flagged)``."""
    return stream_step_vectors(state, edit_aspect_vectors(edit, store), params, cfg)


def first_crossing(probs, tau):
    """1-based index of the first probability strictly above ``tau``, or None."""
    for t, p in enumerate(probs, start=1):
        if p > tau:
            return t
    return None


@dataclass
class StreamResult:
    user_id: str
    label: str | None
    probs: list

    @property
    def T(self):
        return len(self.probs)

    def flagged_at(self, tau):
        return first_crossing(self.probs, tau)


def stream_user(user, params, store, cfg=None):
    """Run a whole UserSequence through the streaming detector."""
    state = StreamState.initial(params)
    probs = []
    for edit in user.edits:
        state, prob, _ = stream_step(state, edit, params, store, cfg)
        probs.append(prob)
    return StreamResult(user.user_id, user.label, probs)


# --- metrics --------------------------------------------------------------

def _is_vandal(label):
    if isinstance(label, str):
        return label == VANDAL
    return bool(label)


def _ratio(num, den):
    return (num / den, False) if den else (0.0, True)


@dataclass
class MetricsReport:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    accuracy: float
    degenerate: tuple = field(default_factory=tuple)

    @property
    def n(self):
        return self.tp + self.fp + self.fn + self.tn


def evaluate(verdicts, labels):
    """Confusion-matrix metrics with vandal as the positive class.

    Ratios with a zero denominator are reported as 0 and named in
    ``degenerate``.
    """
    verdicts, labels = list(verdicts), list(labels)
    if len(verdicts) != len(labels):
        raise ValueError(f"{len(verdicts)} verdicts but {len(labels)} labels")
    tp = fp = fn = tn = 0
    for v, y in zip(verdicts, labels):
        pos = _is_vandal(y)
        if v and pos:
            tp += 1
        elif v:
            fp += 1
        elif pos:
            fn += 1
        else:
            tn += 1
    degenerate = []
    precision, bad = _ratio(tp, tp + fp)
    if bad:
        degenerate.append("precision")
    recall, bad = _ratio(tp, tp + fn)
    if bad:
        degenerate.append("recall")
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate.append("f1")
    accuracy, bad = _ratio(tp + tn, len(labels))
    if bad:
        degenerate.append("accuracy")
    return MetricsReport(tp, fp, fn, tn, precision, recall, f1, accuracy, tuple(degenerate))


@dataclass
class EarlyStats:
    avg_edits: float
    fraction_early: float
    n_vandals: int
    n_early: int


def early_stats(results, tau):
    """Early-detection summary over the vandals in ``results``.

    A vandal counts as early-detected when flagged strictly before its last
    recorded edit; ``avg_edits`` is the mean flag step over those vandals
    (0.0 if there are none).
    """
    steps = []
    n_vandals = 0
    for r in results:
        if not _is_vandal(r.label):
            continue
        n_vandals += 1
        at = r.flagged_at(tau)
        if at is not None and at < r.T:
            steps.append(at)
    avg = float(np.mean(steps)) if steps else 0.0
    frac = len(steps) / n_vandals if n_vandals else 0.0
    return EarlyStats(avg, frac, n_vandals, len(steps))


def threshold_sweep(probs, labels, taus=TAU_GRID):
    """Batch metrics for each tau on fixed final-step probabilities."""
    return [(tau, evaluate([p > tau for p in probs], labels)) for tau in taus]


def stream_sweep(results, taus=TAU_GRID):
    """Per-tau streaming metrics: a user counts as flagged if any step crossed tau."""
    labels = [r.label for r in results]
    rows = []
    for tau in taus:
        report = evaluate([r.flagged_at(tau) is not None for r in results], labels)
        rows.append((tau, report, early_stats(results, tau)))
    return rows


# --- tables ---------------------------------------------------------------

BATCH_COLUMNS = ("tau", "precision", "recall", "f1", "accuracy")
EARLY_COLUMNS = ("tau", "precision", "recall", "f1", "edits", "early_detected")


def batch_table_rows(sweep):
    return [(tau, r.precision, r.recall, r.f1, r.accuracy) for tau, r in sweep]


def early_table_rows(sweep):
    return [(tau, r.precision, r.recall, r.f1, e.avg_edits, e.fraction_early) for tau, r, e in sweep]


def format_tsv(columns, rows):
    lines = ["\t".join(columns)]
    for row in rows:
        lines.append("\t".join(f"{v:.6f}" if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def format_table(columns, rows, percent=()):
    """Fixed-width text table; columns named in ``percent`` print as percentages."""
    cells = []
    for row in rows:
        out = []
        for col, v in zip(columns, row):
            if col == "tau":
                out.append(f"{v:.2f}")
            elif col in percent:
                out.append(f"{100 * v:.2f}%")
            else:
                out.append(f"{v:.2f}")
        cells.append(out)
    widths = [max([len(c)] + [len(r[i]) for r in cells]) for i, c in enumerate(columns)]
    sep = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
    lines = [sep, "| " + " | ".join(c.rjust(w) for c, w in zip(columns, widths)) + " |", sep]
    lines += ["| " + " | ".join(v.rjust(w) for v, w in zip(r, widths)) + " |" for r in cells]
    lines.append(sep)
    return "\n".join(lines) + "\n"
