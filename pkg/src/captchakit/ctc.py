"""CTC sequence semantics: collapse, greedy and prefix-beam decoding, and
exact label-sequence likelihood via the forward dynamic program.

Conventions used throughout:

- A logits matrix holds log-probabilities, T frames by C+1 classes, where
  class index C (the last column) is the blank.
- All arithmetic stays in the log domain, combined with log-sum-exp.
- Minus infinity is represented by a finite sentinel so that adding scores
  never produces NaN.
- Argmax ties are broken by the lowest class index, making every decode
  deterministic across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Finite stand-in for log(0); low enough that no achievable path score
#: over hundreds of frames can approach it.
NEG_INF = -1.0e35


@dataclass(frozen=True)
class LogitsMatrix:
    """Per-frame class log-probability matrix plus its label alphabet.

    ``log_probs[t, k]`` is log P(class k at frame t). Class index
    ``len(alphabet)`` is the blank. Rows must exponentiate-sum to 1.
    """

    log_probs: np.ndarray
    alphabet: str

    def __post_init__(self):
        lp = np.asarray(self.log_probs, dtype=np.float64)
        object.__setattr__(self, "log_probs", lp)
        if lp.ndim != 2:
            raise ValueError("log_probs must be a 2-D array")
        t, k = lp.shape
        if t < 1 or len(self.alphabet) < 1:
            raise ValueError("need at least one frame and one alphabet symbol")
        if k != len(self.alphabet) + 1:
            raise ValueError(
                f"class count {k} does not match alphabet size {len(self.alphabet)} + blank"
            )
        row_sums = np.exp(lp).sum(axis=1)
        if not np.allclose(row_sums, 1.0, atol=1e-6):
            raise ValueError("per-frame probabilities must sum to 1 within 1e-6")

    @property
    def frames(self) -> int:
        return self.log_probs.shape[0]

    @property
    def blank(self) -> int:
        return len(self.alphabet)

    @classmethod
    def from_probs(cls, probs, alphabet: str) -> "LogitsMatrix":
        """Build from linear-domain probabilities, flooring zeros to the sentinel."""
        p = np.asarray(probs, dtype=np.float64)
        with np.errstate(divide="ignore"):
            lp = np.where(p > 0, np.log(np.maximum(p, 1e-300)), NEG_INF)
        return cls(lp, alphabet)


@dataclass(frozen=True)
class DecodeResult:
    """Decoded label and its log score.

    For greedy decoding the score is the single best path's log-probability;
    for beam decoding it is the accumulated probability of the labeling
    (summed over the alignments the beam tracked).
    """

    label: str
    score: float


def collapse(frame_labels, blank: int, alphabet: str) -> str:
    """Collapse a frame-label path: merge adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for idx in frame_labels:
        idx = int(idx)
        if idx < 0 or idx > blank:
            raise ValueError(f"class index {idx} out of range [0, {blank}]")
        if idx != prev:
            if idx != blank:
                out.append(alphabet[idx])
            prev = idx
    return "".join(out)


def greedy_decode(logits: LogitsMatrix) -> DecodeResult:
    """Best-path decode: collapse of per-frame argmax.

    Score is the sum of the chosen frames' log-probabilities. np.argmax
    already returns the first (lowest) index on ties, which is the tie rule.
    """
    lp = logits.log_probs
    path = np.argmax(lp, axis=1)
    score = float(lp[np.arange(lp.shape[0]), path].sum())
    return DecodeResult(collapse(path, logits.blank, logits.alphabet), score)


def _logaddexp(a: float, b: float) -> float:
    if a <= NEG_INF:
        return b
    if b <= NEG_INF:
        return a
    m = a if a > b else b
    return m + math.log(math.exp(a - m) + math.exp(b - m))


def beam_decode(logits: LogitsMatrix, beam_width: int) -> DecodeResult:
    """Prefix beam search over collapsed labelings.

    Each candidate prefix tracks two log-probabilities per frame: ending in
    blank and ending in its final non-blank symbol. A beam wide enough to
    hold every distinct prefix makes the search exact. Returns the labeling
    with the highest total probability; ties prefer the lexicographically
    smaller label in alphabet-index order (determinism).
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    lp = logits.log_probs
    blank = logits.blank
    alphabet = logits.alphabet

    # prefix -> (log p ending in blank, log p ending in non-blank)
    beams: dict[tuple[int, ...], tuple[float, float]] = {(): (0.0, NEG_INF)}

    for t in range(lp.shape[0]):
        frame = lp[t]
        nxt: dict[tuple[int, ...], tuple[float, float]] = {}

        def bump(prefix, p_b, p_nb):
            old = nxt.get(prefix, (NEG_INF, NEG_INF))
            nxt[prefix] = (_logaddexp(old[0], p_b), _logaddexp(old[1], p_nb))

        for prefix, (p_b, p_nb) in beams.items():
            total = _logaddexp(p_b, p_nb)
            # extend with blank: prefix unchanged
            bump(prefix, total + frame[blank], NEG_INF)
            for k in range(blank):
                pk = frame[k]
                if pk <= NEG_INF:
                    continue
                if prefix and prefix[-1] == k:
                    # same symbol: repeat within the run (non-blank mass only)
                    bump(prefix, NEG_INF, p_nb + pk)
                    # new occurrence requires a preceding blank
                    bump(prefix + (k,), NEG_INF, p_b + pk)
                else:
                    bump(prefix + (k,), NEG_INF, total + pk)

        if len(nxt) > beam_width:
            ranked = sorted(
                nxt.items(),
                key=lambda kv: (-_logaddexp(kv[1][0], kv[1][1]), kv[0]),
            )
            nxt = dict(ranked[:beam_width])
        beams = nxt

    best_prefix, best_score = (), NEG_INF
    for prefix, (p_b, p_nb) in sorted(beams.items()):
        total = _logaddexp(p_b, p_nb)
        if total > best_score:
            best_prefix, best_score = prefix, total
    return DecodeResult("".join(alphabet[k] for k in best_prefix), best_score)


def log_likelihood(logits: LogitsMatrix, target: str) -> float:
    """Exact log P(target | logits) by the forward algorithm.

    Runs over the blank-interleaved extended target b,s1,b,s2,...,b with the
    standard transition rules; returns the NEG_INF sentinel when the target
    is unreachable (longer than the frame budget allows).
    """
    alphabet = logits.alphabet
    index = {c: i for i, c in enumerate(alphabet)}
    for c in target:
        if c not in index:
            raise ValueError(f"target character {c!r} not in alphabet")

    lp = logits.log_probs
    blank = logits.blank
    big_t = lp.shape[0]

    ext = [blank]
    for c in target:
        ext.append(index[c])
        ext.append(blank)
    s_len = len(ext)

    # reachability: need at least len(target) frames plus one per repeat break
    min_frames = len(target) + sum(
        1 for i in range(1, len(target)) if target[i] == target[i - 1]
    )
    if min_frames > big_t:
        return NEG_INF

    alpha = np.full(s_len, NEG_INF)
    alpha[0] = lp[0, blank]
    if s_len > 1:
        alpha[1] = lp[0, ext[1]]

    for t in range(1, big_t):
        prev = alpha
        alpha = np.full(s_len, NEG_INF)
        for s in range(s_len):
            a = prev[s]
            if s >= 1:
                a = _logaddexp(a, prev[s - 1])
            # skip a blank between distinct symbols
            if s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]:
                a = _logaddexp(a, prev[s - 2])
            if a > NEG_INF:
                alpha[s] = a + lp[t, ext[s]]

    total = _logaddexp(float(alpha[-1]), float(alpha[-2]) if s_len > 1 else NEG_INF)
    return total


def all_labelings(alphabet: str, max_len: int):
    """Yield every label string over the alphabet with length 0..max_len.

    Exhaustive enumeration for small-instance oracles.
    """
    from itertools import product

    yield ""
    for n in range(1, max_len + 1):
        for combo in product(alphabet, repeat=n):
            yield "".join(combo)
