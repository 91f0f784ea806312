"""Multi-pattern dictionary matcher.

One Aho-Corasick automaton answers every (element -> label, labeling
function) pattern in a single pass per text. Results are identical to
scanning each element naively; the automaton only buys throughput.

Patterns live on one of two channels: ``raw`` patterns are matched against
the text as-is (the exact-match labeling functions), ``lower`` patterns
against the lowercased text (all other dictionary variants). A hit counts
only at token boundaries: the characters adjacent to the occurrence must be
non-alphanumeric or absent.

The scan loop is compiled with numba when available and falls back to pure
Python otherwise; both walk the same flattened automaton and return
identical results.
"""

from __future__ import annotations

from collections import deque
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from .textutil import lowercase

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(**_kwargs):
        def wrap(fn):
            return fn

        return wrap


CHANNEL_RAW = 0
CHANNEL_LOWER = 1

_MAX_CODEPOINT = 0x110000
# Symbol 0: any codepoint outside the pattern alphabet that is not
# alphanumeric; symbol 1: same but alphanumeric. Pattern characters get
# ids >= 2 and carry their own alphanumeric bit.
_SYM_OTHER = 0
_SYM_OTHER_ALNUM = 1

_alnum_table: np.ndarray | None = None


def _codepoint_alnum_table() -> np.ndarray:
    """Boolean table: is codepoint alphanumeric. Built once per process."""
    global _alnum_table
    if _alnum_table is None:
        table = np.zeros(_MAX_CODEPOINT, dtype=np.uint8)
        for cp in range(_MAX_CODEPOINT):
            if chr(cp).isalnum():
                table[cp] = 1
        _alnum_table = table
    return _alnum_table


def _encode(text: str) -> np.ndarray:
    return np.frombuffer(text.encode("utf-32-le"), dtype=np.uint32)


@njit(cache=True, nogil=True)
def _scan(
    syms,
    trans_start,
    trans_syms,
    trans_next,
    fail,
    first_out,
    out_link,
    out_start,
    out_pats,
    pat_lens,
    sym_alnum,
    matched,
):
    state = 0
    n = syms.shape[0]
    for pos in range(n):
        s = syms[pos]
        while True:
            lo = trans_start[state]
            hi = trans_start[state + 1]
            nxt = -1
            while lo < hi:
                mid = (lo + hi) >> 1
                v = trans_syms[mid]
                if v == s:
                    nxt = trans_next[mid]
                    break
                elif v < s:
                    lo = mid + 1
                else:
                    hi = mid
            if nxt >= 0:
                state = nxt
                break
            if state == 0:
                break
            state = fail[state]
        node = first_out[state]
        while node != 0:
            for k in range(out_start[node], out_start[node + 1]):
                pid = out_pats[k]
                if matched[pid] == 0:
                    start = pos - pat_lens[pid] + 1
                    left_ok = start == 0 or sym_alnum[syms[start - 1]] == 0
                    right_ok = pos == n - 1 or sym_alnum[syms[pos + 1]] == 0
                    if left_ok and right_ok:
                        matched[pid] = 1
            node = out_link[node]
    return matched


def _scan_py(
    syms,
    trans_start,
    trans_syms,
    trans_next,
    fail,
    first_out,
    out_link,
    out_start,
    out_pats,
    pat_lens,
    sym_alnum,
    matched,
):
    # Mirror of the compiled loop, kept in sync by the equivalence tests.
    state = 0
    n = syms.shape[0]
    for pos in range(n):
        s = syms[pos]
        while True:
            lo = trans_start[state]
            hi = trans_start[state + 1]
            nxt = -1
            while lo < hi:
                mid = (lo + hi) >> 1
                v = trans_syms[mid]
                if v == s:
                    nxt = trans_next[mid]
                    break
                elif v < s:
                    lo = mid + 1
                else:
                    hi = mid
            if nxt >= 0:
                state = nxt
                break
            if state == 0:
                break
            state = fail[state]
        node = first_out[state]
        while node != 0:
            for k in range(out_start[node], out_start[node + 1]):
                pid = out_pats[k]
                if matched[pid] == 0:
                    start = pos - pat_lens[pid] + 1
                    left_ok = start == 0 or sym_alnum[syms[start - 1]] == 0
                    right_ok = pos == n - 1 or sym_alnum[syms[pos + 1]] == 0
                    if left_ok and right_ok:
                        matched[pid] = 1
            node = out_link[node]
    return matched


@dataclass(frozen=True)
class _Pattern:
    text: str
    channel: int
    outputs: tuple  # (label, lf) pairs sharing this pattern and channel


class Matcher:
    """Immutable after build; shared read-only across worker threads."""

    def __init__(self, patterns: list[_Pattern], backend: str = "auto"):
        if not patterns:
            raise ValueError("empty pattern set")
        if any(not p.text for p in patterns):
            raise ValueError("empty pattern")
        if backend == "auto":
            backend = "numba" if _HAVE_NUMBA else "python"
        if backend not in ("numba", "python"):
            raise ValueError(f"unknown matcher backend {backend!r}")
        if backend == "numba" and not _HAVE_NUMBA:
            raise ValueError("numba backend requested but numba is unavailable")
        self._scan = _scan if backend == "numba" else _scan_py
        self.backend = backend
        self._patterns = patterns
        self._channels = np.array([p.channel for p in patterns], dtype=np.uint8)
        self._build_symbol_table()
        self._build_automaton()

    def _build_symbol_table(self) -> None:
        alnum = _codepoint_alnum_table()
        sym_table = alnum.astype(np.int32)  # other: 0 non-alnum, 1 alnum
        alphabet = sorted({ch for p in self._patterns for ch in p.text})
        self._sym_of_char = {ch: i + 2 for i, ch in enumerate(alphabet)}
        for ch, sym in self._sym_of_char.items():
            sym_table[ord(ch)] = sym
        self._sym_table = sym_table
        sym_alnum = np.zeros(len(alphabet) + 2, dtype=np.uint8)
        sym_alnum[_SYM_OTHER_ALNUM] = 1
        for ch, sym in self._sym_of_char.items():
            sym_alnum[sym] = 1 if ch.isalnum() else 0
        self._sym_alnum = sym_alnum

    def _build_automaton(self) -> None:
        # Trie over symbol ids, dict transitions during construction.
        transitions: list[dict[int, int]] = [{}]
        terminal: list[list[int]] = [[]]
        for pid, pat in enumerate(self._patterns):
            state = 0
            for ch in pat.text:
                sym = self._sym_of_char[ch]
                nxt = transitions[state].get(sym)
                if nxt is None:
                    transitions.append({})
                    terminal.append([])
                    nxt = len(transitions) - 1
                    transitions[state][sym] = nxt
                state = nxt
            terminal[state].append(pid)

        n_nodes = len(transitions)
        fail = np.zeros(n_nodes, dtype=np.int32)
        out_link = np.zeros(n_nodes, dtype=np.int32)
        first_out = np.zeros(n_nodes, dtype=np.int32)
        queue: deque[int] = deque()
        for nxt in transitions[0].values():
            queue.append(nxt)
        while queue:
            node = queue.popleft()
            f = fail[node]
            out_link[node] = f if terminal[f] else out_link[f]
            first_out[node] = node if terminal[node] else out_link[node]
            for sym, child in transitions[node].items():
                # Walk the fail chain for the longest proper suffix state.
                f = fail[node]
                while f != 0 and sym not in transitions[f]:
                    f = fail[f]
                fail[child] = transitions[f].get(sym, 0)
                if fail[child] == child:
                    fail[child] = 0
                queue.append(child)

        counts = [len(t) for t in transitions]
        trans_start = np.zeros(n_nodes + 1, dtype=np.int64)
        trans_start[1:] = np.cumsum(counts)
        total = int(trans_start[-1])
        trans_syms = np.zeros(total, dtype=np.int32)
        trans_next = np.zeros(total, dtype=np.int32)
        for node, table in enumerate(transitions):
            base = trans_start[node]
            for i, (sym, nxt) in enumerate(sorted(table.items())):
                trans_syms[base + i] = sym
                trans_next[base + i] = nxt

        out_counts = [len(t) for t in terminal]
        out_start = np.zeros(n_nodes + 1, dtype=np.int64)
        out_start[1:] = np.cumsum(out_counts)
        out_pats = np.zeros(int(out_start[-1]), dtype=np.int32)
        for node, pids in enumerate(terminal):
            base = out_start[node]
            for i, pid in enumerate(pids):
                out_pats[base + i] = pid

        self._fail = fail
        self._first_out = first_out
        self._out_link = out_link
        self._trans_start = trans_start
        self._trans_syms = trans_syms
        self._trans_next = trans_next
        self._out_start = out_start
        self._out_pats = out_pats
        self._pat_lens = np.array([len(p.text) for p in self._patterns], dtype=np.int32)
        self._has_raw = bool(np.any(self._channels == CHANNEL_RAW))
        self._has_lower = bool(np.any(self._channels == CHANNEL_LOWER))

    def _scan_channel(self, texts: list[str], channel: int) -> np.ndarray:
        matched = np.zeros(len(self._patterns), dtype=np.uint8)
        for text in texts:
            if not text:
                continue
            codes = _encode(text)
            syms = self._sym_table[codes]
            self._scan(
                syms,
                self._trans_start,
                self._trans_syms,
                self._trans_next,
                self._fail,
                self._first_out,
                self._out_link,
                self._out_start,
                self._out_pats,
                self._pat_lens,
                self._sym_alnum,
                matched,
            )
        return matched & (self._channels == channel)

    def match_fields(self, fields: list[str]) -> set[tuple[str, str]]:
        """(label, lf) pairs whose dictionary hits any of the text fields.

        Fields are matched independently; a hit in any one suffices.
        """
        hits = np.zeros(len(self._patterns), dtype=np.uint8)
        if self._has_raw:
            hits |= self._scan_channel(fields, CHANNEL_RAW)
        if self._has_lower:
            hits |= self._scan_channel([lowercase(t) for t in fields], CHANNEL_LOWER)
        out: set[tuple[str, str]] = set()
        for pid in np.flatnonzero(hits):
            out.update(self._patterns[pid].outputs)
        return out


def build_matcher_from_entries(
    entries: Iterable[tuple[str, int, str, str]], backend: str = "auto"
) -> Matcher:
    """Build from (pattern, channel, label, lf) tuples, merging duplicates."""
    grouped: dict[tuple[str, int], list[tuple[str, str]]] = {}
    for pattern, channel, label, lf in entries:
        grouped.setdefault((pattern, channel), []).append((label, lf))
    patterns = [
        _Pattern(text=pattern, channel=channel, outputs=tuple(sorted(set(outs))))
        for (pattern, channel), outs in sorted(grouped.items())
    ]
    return Matcher(patterns, backend=backend)
