"""Average motif affinity scoring and PWM-vs-PWM comparison."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence as Seq

import numpy as np

from .seqdata import BASE_INDEX, Sequence

BACKGROUND = 0.25


class ScoreError(ValueError):
    pass


def _indices(seq: Sequence | str) -> np.ndarray:
    bases = seq.bases if isinstance(seq, Sequence) else seq
    try:
        return np.array([BASE_INDEX[b] for b in bases], dtype=int)
    except KeyError as exc:
        raise ScoreError(f"AMA scoring needs N-free sequences, found {exc.args[0]!r}") from None


def ama_score(pwm, seq: Sequence | str) -> float:
    """Mean over every offset of the site odds ratio against a 0.25 background."""
    pwm = np.asarray(pwm, dtype=float)
    idx = _indices(seq)
    W, L = pwm.shape[0], idx.size
    if W > L:
        raise ScoreError(f"motif width {W} exceeds sequence length {L}")
    # odds[t, i] = p[i, base(t + i)] / background
    windows = np.lib.stride_tricks.sliding_window_view(idx, W)
    odds = pwm[np.arange(W), windows] / BACKGROUND
    return float(odds.prod(axis=1).mean())


@dataclass
class AffinityReport:
    ids: list[str]
    scores_a: np.ndarray
    scores_b: np.ndarray
    a_wins: int
    b_wins: int
    ties: int

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def win_fraction(self) -> float:
        return self.a_wins / self.n

    def summary(self, which: str = "a") -> dict[str, float]:
        s = self.scores_a if which == "a" else self.scores_b
        return {"mean": float(np.mean(s)), "median": float(np.median(s))}

    def winners(self) -> list[str]:
        return ["a" if a > b else "b" if b > a else "tie"
                for a, b in zip(self.scores_a, self.scores_b)]

    def to_tsv(self) -> str:
        lines = ["seq_id\tscore_a\tscore_b\twinner"]
        for sid, a, b, w in zip(self.ids, self.scores_a, self.scores_b, self.winners()):
            lines.append(f"{sid}\t{a:.6g}\t{b:.6g}\t{w}")
        return "\n".join(lines) + "\n"

    def summary_line(self) -> str:
        return f"a_wins={self.a_wins} b_wins={self.b_wins} ties={self.ties}"


def compare_on_sequences(pwm_a, pwm_b, seqs: Seq[Sequence]) -> AffinityReport:
    if len(seqs) == 0:
        raise ScoreError("no sequences")
    a = np.array([ama_score(pwm_a, s) for s in seqs])
    b = np.array([ama_score(pwm_b, s) for s in seqs])
    return AffinityReport(
        ids=[s.id if isinstance(s, Sequence) else str(i) for i, s in enumerate(seqs)],
        scores_a=a, scores_b=b,
        a_wins=int((a > b).sum()), b_wins=int((b > a).sum()), ties=int((a == b).sum()))


def _column_pearson(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row-wise Pearson correlation; a constant row on either side gives 0."""
    xc = x - x.mean(axis=1, keepdims=True)
    yc = y - y.mean(axis=1, keepdims=True)
    nx = np.sqrt((xc * xc).sum(axis=1))
    ny = np.sqrt((yc * yc).sum(axis=1))
    denom = nx * ny
    out = np.zeros(x.shape[0])
    ok = (nx > 1e-12) & (ny > 1e-12)
    out[ok] = (xc[ok] * yc[ok]).sum(axis=1) / denom[ok]
    return out


def motif_similarity(pwm_a, pwm_b) -> tuple[int, float]:
    """Slide the narrower PWM along the wider one without gaps.

    Returns ``(offset of the narrower within the wider, best mean column
    correlation)``; the first offset wins ties.
    """
    a = np.asarray(pwm_a, dtype=float)
    b = np.asarray(pwm_b, dtype=float)
    if a.shape[0] < 1 or b.shape[0] < 1:
        raise ScoreError("motifs must have width >= 1")
    narrow, wide = (a, b) if a.shape[0] <= b.shape[0] else (b, a)
    W = narrow.shape[0]
    best_off, best = 0, -np.inf
    for off in range(wide.shape[0] - W + 1):
        s = float(_column_pearson(narrow, wide[off:off + W]).mean())
        if s > best + 1e-12:
            best_off, best = off, s
    return best_off, best
