"""Class-visualization motif extraction and PWM utilities.

The input matrix starts at 0.25 everywhere and is pushed uphill on
``P(positive | S) - lambda * ||S||^2`` with the network frozen, projecting
back onto [0, 1] after every step.  The result is smoothed into a PWM,
scored per column by information content and windowed.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable
from xml.sax.saxutils import escape

import numpy as np

from . import nncore as nn
from .model import ModelConfig, ModelParams, forward_graph, param_tensors
from .seqdata import ALPHABET

log = logging.getLogger(__name__)


class MotifError(ValueError):
    pass


@dataclass
class ExtractConfig:
    lam: float = 0.005
    # one ascent per step size, all from the same start; the highest objective wins
    step_sizes: tuple[float, ...] = (3.0, 10.0, 30.0, 50.0)
    max_iters: int = 1000
    tol: float = 1e-7
    laplace_alpha: float = 0.1
    # +1 penalizes the squared norm; -1 rewards it, as the objective is sometimes printed
    reg_sign: float = 1.0

    def __post_init__(self):
        if isinstance(self.step_sizes, (int, float)):
            self.step_sizes = (float(self.step_sizes),)
        self.step_sizes = tuple(float(s) for s in self.step_sizes)
        if self.lam < 0:
            raise MotifError("lambda must be >= 0")
        if self.laplace_alpha <= 0:
            raise MotifError("laplace_alpha must be > 0")
        if self.max_iters < 0:
            raise MotifError("max_iters must be >= 0")
        if not self.step_sizes or min(self.step_sizes) <= 0:
            raise MotifError("step sizes must be > 0")
        if self.reg_sign not in (1.0, -1.0):
            raise MotifError("reg_sign must be +1 or -1")


@dataclass
class Window:
    offset: int
    width: int
    pwm: np.ndarray


@dataclass
class MotifResult:
    S: np.ndarray
    full_pwm: np.ndarray
    ic_per_column: np.ndarray
    trace: list[float] = field(default_factory=list)
    logit_trace: list[float] = field(default_factory=list)
    best_window: Window | None = None
    step_size: float = 0.0
    p_positive: float = float("nan")
    # (step size, best objective) for every ascent that was run
    ladder: list[tuple[float, float]] = field(default_factory=list)


def _objective(tensors, cfg: ModelConfig, S: nn.Tensor, lam: float, sign: float):
    probs = nn.softmax(forward_graph(tensors, cfg, S))
    p_pos = probs[1]
    return p_pos - (sign * lam) * nn.sum_all(nn.square(S)), p_pos


def _logit(p: float) -> float:
    return float(np.log(p) - np.log1p(-p)) if 0.0 < p < 1.0 else float("nan")


def extract_motif(params: ModelParams, cfg: ModelConfig, ecfg: ExtractConfig | None = None,
                  callback: Callable[[int, np.ndarray, float], None] | None = None,
                  init: np.ndarray | None = None) -> MotifResult:
    """Projected gradient ascent on the input matrix of a frozen model.

    Every step size in ``ecfg.step_sizes`` gets its own ascent from the
    uniform 0.25 matrix; the run reaching the highest objective is kept
    (the first one on ties).  ``callback(iteration, S, objective)`` is
    invoked after every step of every run.  ``init`` replaces the uniform
    start, e.g. to warm-start from a previous result.
    """
    ecfg = ecfg or ExtractConfig()
    tensors = param_tensors(params)

    def evaluate(S_arr, need_grad):
        St = nn.Tensor(S_arr, requires_grad=need_grad)
        J, p_pos = _objective(tensors, cfg, St, ecfg.lam, ecfg.reg_sign)
        if not np.isfinite(J.values):
            raise MotifError("non-finite objective during motif extraction")
        if need_grad:
            nn.backward(J)
        return J.item(), St.grad, p_pos.item()

    if init is None:
        S0 = np.full((cfg.input_len, len(ALPHABET)), 0.25)
    else:
        S0 = np.asarray(init, dtype=float)
        if S0.shape != (cfg.input_len, len(ALPHABET)):
            raise MotifError(f"init must be {cfg.input_len} x 4, got {S0.shape}")
        if S0.min() < 0 or S0.max() > 1:
            raise MotifError("init entries must lie in [0, 1]")
    J0, grad0, p0 = evaluate(S0, ecfg.max_iters > 0)
    if ecfg.max_iters > 0 and not np.any(grad0):
        log.warning("input gradient is identically zero; is the model trained?")

    def ascend(step):
        S, J, grad = S0, J0, grad0
        trace, logits = [J0], [_logit(p0)]
        best_J, best_S, best_p = J0, S0, p0
        for _ in range(ecfg.max_iters):
            S = np.clip(S + step * grad, 0.0, 1.0)
            J_new, grad, p = evaluate(S, True)
            if callback is not None:
                callback(len(trace), S, J_new)
            trace.append(J_new)
            logits.append(_logit(p))
            if J_new > best_J:
                best_J, best_S, best_p = J_new, S, p
            if abs(J_new - J) < ecfg.tol:
                break
            J = J_new
        # large steps are not monotone; keep the highest objective visited
        return best_J, best_S, best_p, trace, logits

    runs = [(step,) + ascend(step) for step in ecfg.step_sizes]
    step, _, S, p_best, trace, logits = max(runs, key=lambda r: r[1])
    log.info("ascent ladder %s; kept step %g", [(r[0], round(r[1], 4)) for r in runs], step)
    pwm = to_pwm(S, ecfg.laplace_alpha)
    return MotifResult(S=S, full_pwm=pwm, ic_per_column=information_content(pwm),
                       trace=trace, logit_trace=logits, step_size=step, p_positive=p_best,
                       ladder=[(r[0], r[1]) for r in runs])


def to_pwm(S, alpha: float = 0.1) -> np.ndarray:
    """Laplace-smoothed row normalization of a relaxed ``L x 4`` matrix."""
    S = np.asarray(S, dtype=float)
    if alpha <= 0:
        raise MotifError("pseudocount must be > 0")
    if S.ndim != 2 or S.shape[1] != 4:
        raise MotifError(f"expected an L x 4 matrix, got {S.shape}")
    if (S < 0).any():
        raise MotifError("matrix has negative entries")
    return (S + alpha) / (S.sum(axis=1, keepdims=True) + 4 * alpha)


def information_content(pwm) -> np.ndarray:
    """Bits per column against a uniform background (0 log 0 = 0)."""
    p = np.asarray(pwm, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return 2.0 + plogp.sum(axis=1)


def best_window(result: MotifResult | np.ndarray, width: int) -> Window:
    """Window of ``width`` columns with the highest mean IC (first on ties)."""
    pwm = result.full_pwm if isinstance(result, MotifResult) else np.asarray(result, dtype=float)
    ic = result.ic_per_column if isinstance(result, MotifResult) else information_content(pwm)
    L = pwm.shape[0]
    if width < 1 or width > L:
        raise MotifError(f"window width {width} outside [1, {L}]")
    sums = np.convolve(ic, np.ones(width), mode="valid")
    # rounding keeps float noise in the running sums from breaking exact ties
    sums = np.round(sums, 12)
    offset = int(np.argmax(sums))
    win = Window(offset, width, pwm[offset:offset + width].copy())
    if isinstance(result, MotifResult):
        result.best_window = win
    return win


# ---------------------------------------------------------------------------
# MEME minimal format and JASPAR PFM
# ---------------------------------------------------------------------------

def emit_meme(pwm, name: str = "motif") -> str:
    pwm = np.asarray(pwm, dtype=float)
    lines = [
        "MEME version 4",
        "",
        "ALPHABET= ACGT",
        "",
        "strands: +",
        "",
        "Background letter frequencies",
        "A 0.25 C 0.25 G 0.25 T 0.25",
        "",
        f"MOTIF {name}",
        f"letter-probability matrix: alength= 4 w= {pwm.shape[0]} nsites= 20 E= 0",
    ]
    lines += [" ".join(f"{v:.6f}" for v in row) for row in pwm]
    return "\n".join(lines) + "\n"


_LPM = re.compile(r"letter-probability matrix:.*?w=\s*(\d+)")


def parse_meme(text: str) -> dict[str, np.ndarray]:
    """All motifs in a MEME text, keyed by name, in file order."""
    motifs: dict[str, np.ndarray] = {}
    lines = text.splitlines()
    name = None
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line.startswith("MOTIF"):
            parts = line.split()
            if len(parts) < 2:
                raise MotifError(f"MOTIF line without a name at line {i + 1}")
            name = parts[1]
        m = _LPM.match(line)
        if m:
            if name is None:
                raise MotifError(f"matrix without a MOTIF line at line {i + 1}")
            w = int(m.group(1))
            rows = []
            for j in range(w):
                k = i + 1 + j
                if k >= len(lines):
                    raise MotifError(f"motif {name} truncated: expected {w} rows")
                rows.append([float(v) for v in lines[k].split()])
            arr = np.array(rows)
            if arr.shape != (w, 4):
                raise MotifError(f"motif {name}: expected {w} x 4 matrix, got {arr.shape}")
            motifs[name] = arr
            i += w
        i += 1
    if not motifs:
        raise MotifError("no motifs found in MEME text")
    return motifs


def read_meme(path: str | Path) -> np.ndarray:
    """First motif of a MEME file."""
    return next(iter(parse_meme(Path(path).read_text()).values()))


def emit_jaspar(counts, name: str = "motif") -> str:
    counts = np.asarray(counts, dtype=float)
    lines = [f">{name}"]
    for j, base in enumerate(ALPHABET):
        vals = " ".join(f"{v:g}" for v in counts[:, j])
        lines.append(f"{base} [ {vals} ]")
    return "\n".join(lines) + "\n"


def parse_jaspar(text: str) -> tuple[str, np.ndarray]:
    """``(name, W x 4 probabilities)`` from JASPAR PFM text."""
    name = None
    rows: dict[str, list[float]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(">"):
            name = line[1:].split()[0] if line[1:].strip() else ""
            continue
        m = re.match(r"([ACGT])\s*\[(.*)\]$", line)
        if not m:
            raise MotifError(f"malformed JASPAR line {lineno}: {line!r}")
        rows[m.group(1)] = [float(v) for v in m.group(2).split()]
    if set(rows) != set(ALPHABET):
        raise MotifError("JASPAR matrix needs rows A, C, G and T")
    widths = {len(v) for v in rows.values()}
    if len(widths) != 1:
        raise MotifError("JASPAR rows have unequal lengths")
    counts = np.array([rows[b] for b in ALPHABET]).T
    totals = counts.sum(axis=1, keepdims=True)
    if (totals <= 0).any():
        raise MotifError("JASPAR column with zero total count")
    return name or "motif", counts / totals


def read_pwm_file(path: str | Path) -> np.ndarray:
    """Load a PWM from MEME or JASPAR PFM text, sniffing the format."""
    text = Path(path).read_text()
    if text.lstrip().startswith(">"):
        return parse_jaspar(text)[1]
    return next(iter(parse_meme(text).values()))


# ---------------------------------------------------------------------------
# sequence logo
# ---------------------------------------------------------------------------

COLORS = {"A": "#109648", "C": "#255C99", "G": "#F7B32B", "T": "#D62839"}


def logo_svg(pwm, col_width: int = 30, height: int = 120) -> str:
    """Standalone SVG logo; letter heights are ``p * IC`` on a 2-bit axis."""
    pwm = np.asarray(pwm, dtype=float)
    ic = information_content(pwm)
    margin, top = 40, 10
    W = margin + col_width * pwm.shape[0] + 10
    H = top + height + 30
    base_y = top + height
    parts = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">',
        f'<line x1="{margin - 4}" y1="{top}" x2="{margin - 4}" y2="{base_y}" stroke="black"/>',
        f'<line x1="{margin - 4}" y1="{base_y}" x2="{W - 10}" y2="{base_y}" stroke="black"/>',
    ]
    for bits in (0, 1, 2):
        y = base_y - bits / 2.0 * height
        parts.append(f'<text x="{margin - 8}" y="{y:.2f}" font-size="10" text-anchor="end">{bits}</text>')
    parts.append(f'<text x="10" y="{top + height / 2:.2f}" font-size="10" '
                 f'transform="rotate(-90 10 {top + height / 2:.2f})" text-anchor="middle">bits</text>')
    for i, row in enumerate(pwm):
        x = margin + i * col_width
        y = base_y
        parts.append(f'<g class="column" data-pos="{i}">')
        for j in np.argsort(row, kind="stable"):
            h = row[j] * ic[i] / 2.0 * height
            if h <= 1e-9:
                continue
            letter = ALPHABET[j]
            y -= h
            # glyph box: cap height ~0.72 of font size; scale y to fill h
            sy = h / (0.72 * col_width)
            parts.append(
                f'<text class="letter" data-base="{letter}" data-height="{h:.4f}" '
                f'x="0" y="0" font-family="Arial, Helvetica, sans-serif" font-weight="bold" '
                f'font-size="{col_width}" fill="{COLORS[letter]}" text-anchor="middle" '
                f'transform="translate({x + col_width / 2:.2f},{y + h:.4f}) scale(1,{sy:.6f})">'
                f'{escape(letter)}</text>')
        parts.append("</g>")
        parts.append(f'<text x="{x + col_width / 2:.2f}" y="{base_y + 14}" font-size="9" '
                     f'text-anchor="middle">{i + 1}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_logo_svg(pwm, path: str | Path) -> None:
    try:
        Path(path).write_text(logo_svg(pwm), encoding="utf-8")
    except OSError as exc:
        raise MotifError(f"cannot write logo to {path}: {exc}") from exc
