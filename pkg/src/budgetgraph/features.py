"""Fixed-size feature vectors for packed node inputs.

64 hand-crafted statistics (zero-padded) followed by 256 hashed word-bigram
counts taken from the task line, L2-normalised as a whole.
"""

from __future__ import annotations

import math
import re
import zlib

import numpy as np

N_STATS = 64
N_HASH = 256
FEATURE_DIM = N_STATS + N_HASH

_SECTION_RE = re.compile(r"^=== ([A-Z ]+) ===$", re.M)
_WORD_RE = re.compile(r"[a-z0-9]+")
_OPERATORS = set("+-*/=^<>%")
_QUESTION_WORDS = {"what", "who", "when", "where", "why", "how", "which", "whose", "whom"}
_LIST_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+", re.M)


def split_packet(packet: str) -> dict[str, str]:
    """Split a packed node input into its sections.

    Returns keys ``question``, ``summary``, ``evidence``, ``parents``, ``task``.
    Text that is not in the packed layout is treated as a bare task.
    """
    out = {"question": "", "summary": "", "evidence": "", "parents": "", "task": packet}
    heads = list(_SECTION_RE.finditer(packet))
    if not heads:
        return out
    names = {
        "ORIGINAL QUESTION": "question",
        "SUMMARY": "summary",
        "EVIDENCE": "evidence",
        "PARENT RESULTS": "parents",
    }
    tail = packet
    for i, m in enumerate(heads):
        end = heads[i + 1].start() if i + 1 < len(heads) else len(packet)
        body = packet[m.end():end]
        if i + 1 == len(heads):
            idx = body.rfind("\nTask: ")
            if idx >= 0:
                tail = body[idx + len("\nTask: "):]
                body = body[:idx]
            else:
                tail = ""
        body = body.strip("\n")
        key = names.get(m.group(1))
        if key is not None:
            out[key] = "" if body.strip() == "(none)" else body
    out["task"] = tail
    return out


def _bucket(a: str, b: str) -> int:
    return zlib.crc32(f"{a}\x00{b}".encode("utf-8")) % N_HASH


def _log(x: float) -> float:
    return math.log1p(x)


def featurize(packet: str, depth: int) -> np.ndarray:
    """Deterministic 320-dimensional feature vector of ``(packet, depth)``."""
    parts = split_packet(packet)
    task = parts["task"]
    words = _WORD_RE.findall(task.lower())
    parent_lines = [ln for ln in parts["parents"].splitlines() if ln.strip()]

    v = np.zeros(FEATURE_DIM, dtype=np.float64)
    s = v[:N_STATS]
    s[0] = _log(len(packet))
    s[1] = _log(math.ceil(len(packet) / 4))
    s[2] = float(depth)
    s[3] = _log(sum(ch.isdigit() for ch in task))
    s[4] = _log(sum(ch in _OPERATORS for ch in task))
    s[5] = _log(sum(w in _QUESTION_WORDS for w in words))
    s[6] = _log(len(parts["summary"]))
    s[7] = _log(len(parts["evidence"]))
    s[8] = _log(len(parts["parents"]))
    s[9] = float(len(parent_lines))
    s[10] = float(any(ln.count("|") >= 2 or "\t" in ln for ln in packet.splitlines()))
    s[11] = float(bool(_LIST_RE.search(task)) or bool(_LIST_RE.search(parts["evidence"])))
    s[12] = _log(len(task))
    s[13] = _log(len(words))
    s[14] = (sum(len(w) for w in words) / len(words)) if words else 0.0
    s[15] = _log(len(set(words)))
    s[16] = _log(len(parts["question"]))
    s[17] = float(sum("UNSOLVED_DUE_TO_BUDGET" in ln for ln in parent_lines))
    s[18] = _log(sum(ch.isupper() for ch in task))
    s[19] = _log(sum((not ch.isalnum()) and not ch.isspace() for ch in task))
    s[20] = float(task.count("?"))

    h = v[N_STATS:]
    toks = ["<s>", *words, "</s>"]
    for a, b in zip(toks, toks[1:]):
        h[_bucket(a, b)] += 1.0

    norm = np.linalg.norm(v)
    if norm > 0:
        v /= norm
    return v


def featurize_many(packets, depths) -> np.ndarray:
    return np.stack([featurize(p, d) for p, d in zip(packets, depths)]) if len(packets) else (
        np.zeros((0, FEATURE_DIM))
    )
