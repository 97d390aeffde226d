"""Byte pair encoding over word frequency tables.

Merges are learned by repeatedly fusing the most frequent adjacent symbol
pair, weighted by word frequency. Pair occurrences within a word are
counted left to right without overlap, so "aaa" holds one (a, a) pair.
Ties break toward the lexicographically smallest (left, right) pair, which
keeps training deterministic. Segmentation replays the learned merges in
rank order.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

Pair = tuple[str, str]

SUBWORD_UNK = "<sub-unk>"


class WordFreqTable:
    """Word -> occurrence count table that merge rules are learned from."""

    def __init__(self, entries: Mapping[str, int]):
        for word, count in entries.items():
            if not word:
                raise ValueError("frequency table contains an empty word")
            if any(ch.isspace() for ch in word):
                raise ValueError(f"word contains whitespace: {word!r}")
            if count < 1:
                raise ValueError(f"count for {word!r} must be >= 1, got {count}")
        self.entries: dict[str, int] = dict(entries)

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "WordFreqTable":
        return cls(Counter(tokens))

    @classmethod
    def from_tsv(cls, path) -> "WordFreqTable":
        entries: dict[str, int] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(
                        f"line {lineno}: expected word<TAB>count, got {line!r}"
                    )
                word, count = parts
                try:
                    entries[word] = int(count)
                except ValueError:
                    raise ValueError(
                        f"line {lineno}: count is not an integer: {count!r}"
                    ) from None
        return cls(entries)

    def to_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for word, count in self.entries.items():
                fh.write(f"{word}\t{count}\n")


@dataclass(frozen=True)
class MergeRule:
    left: str
    right: str
    rank: int

    @property
    def product(self) -> str:
        return self.left + self.right


class MergeTable:
    """Ordered merge rules; rank i was learned at iteration i."""

    def __init__(self, rules: Sequence[MergeRule]):
        for i, rule in enumerate(rules):
            if rule.rank != i:
                raise ValueError("merge ranks must be contiguous from 0")
        self.rules: list[MergeRule] = list(rules)

    @property
    def num_merges(self) -> int:
        return len(self.rules)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"#merges: {self.num_merges}\n")
            for rule in self.rules:
                fh.write(f"{rule.left}\t{rule.right}\n")

    @classmethod
    def load(cls, path) -> "MergeTable":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if not header.startswith("#merges: "):
                raise ValueError(f"bad merge table header: {header!r}")
            declared = int(header[len("#merges: ") :])
            rules = []
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"bad merge rule line: {line!r}")
                rules.append(MergeRule(parts[0], parts[1], len(rules)))
        if len(rules) != declared:
            raise ValueError(
                f"merge table declares {declared} rules but has {len(rules)}"
            )
        return cls(rules)


@dataclass(frozen=True)
class Segmentation:
    word: str
    subwords: tuple[str, ...]

    def __post_init__(self):
        if "".join(self.subwords) != self.word:
            raise ValueError(
                f"subwords {self.subwords!r} do not concatenate to {self.word!r}"
            )


def _pair_occurrences(symbols: Sequence[str]) -> Counter:
    """Non-overlapping adjacent pair counts, scanned left to right.

    For each pair type independently: an occurrence at position i is
    skipped when the same pair was counted at i-1, which matches greedy
    left-to-right replacement.
    """
    counts: Counter = Counter()
    last_counted: dict[Pair, int] = {}
    for i in range(len(symbols) - 1):
        pair = (symbols[i], symbols[i + 1])
        if last_counted.get(pair) == i - 1:
            continue
        counts[pair] += 1
        last_counted[pair] = i
    return counts


def count_bigrams(
    segmentations: Mapping[str, Sequence[str]], freqs: WordFreqTable
) -> dict[Pair, int]:
    """Frequency-weighted pair counts over the current segmentation state."""
    totals: Counter = Counter()
    for word, count in freqs.entries.items():
        symbols = segmentations[word]
        if not symbols:
            raise ValueError(f"word {word!r} has an empty segmentation")
        for pair, n in _pair_occurrences(symbols).items():
            totals[pair] += n * count
    return dict(totals)


def _merge_symbols(symbols: Sequence[str], pair: Pair) -> list[str]:
    """Replace adjacent (left, right) with their fusion, greedy left to right."""
    left, right = pair
    product = left + right
    out: list[str] = []
    i = 0
    n = len(symbols)
    while i < n:
        if i < n - 1 and symbols[i] == left and symbols[i + 1] == right:
            out.append(product)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def train_bpe(words: WordFreqTable, num_merges: int) -> MergeTable:
    """Learn up to num_merges rules; stops early when no pair is left.

    Pair counts are maintained incrementally: only words containing the
    merged pair are re-counted after each merge.
    """
    if num_merges < 0:
        raise ValueError(f"num_merges must be >= 0, got {num_merges}")
    segs: dict[str, list[str]] = {w: list(w) for w in words.entries}
    pair_counts: Counter = Counter()
    pair_words: dict[Pair, set[str]] = defaultdict(set)
    for word, count in words.entries.items():
        for pair, n in _pair_occurrences(segs[word]).items():
            pair_counts[pair] += n * count
            pair_words[pair].add(word)
    rules: list[MergeRule] = []
    for rank in range(num_merges):
        best: Pair | None = None
        best_count = 0
        for pair, count in pair_counts.items():
            if count < 1:
                continue
            if count > best_count or (count == best_count and pair < best):
                best, best_count = pair, count
        if best is None:
            break
        for word in pair_words[best].copy():
            count = words.entries[word]
            before = _pair_occurrences(segs[word])
            segs[word] = _merge_symbols(segs[word], best)
            after = _pair_occurrences(segs[word])
            for pair, n in before.items():
                pair_counts[pair] -= n * count
                if after.get(pair, 0) == 0:
                    pair_words[pair].discard(word)
            for pair, n in after.items():
                pair_counts[pair] += n * count
                pair_words[pair].add(word)
        rules.append(MergeRule(best[0], best[1], rank))
    return MergeTable(rules)


def segment_word(word: str, table: MergeTable) -> Segmentation:
    """Split a word into characters, then replay merges in rank order."""
    if not word:
        raise ValueError("cannot segment an empty word")
    symbols: list[str] = list(word)
    for rule in table.rules:
        if len(symbols) < 2:
            break
        symbols = _merge_symbols(symbols, (rule.left, rule.right))
    return Segmentation(word, tuple(symbols))


class SubwordVocab:
    """Subword unit -> index table; index 0 is the reserved unknown unit."""

    def __init__(self, units: Sequence[str]):
        if SUBWORD_UNK in units:
            raise ValueError(f"{SUBWORD_UNK!r} is reserved")
        self.units: list[str] = [SUBWORD_UNK] + list(units)
        self._index = {u: i for i, u in enumerate(self.units)}
        if len(self._index) != len(self.units):
            raise ValueError("duplicate subword units")

    @property
    def size(self) -> int:
        return len(self.units)

    @property
    def unk_index(self) -> int:
        return 0

    def lookup(self, unit: str) -> int:
        return self._index.get(unit, 0)

    def __contains__(self, unit: str) -> bool:
        return unit in self._index

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for unit in self.units:
                fh.write(unit + "\n")

    @classmethod
    def load(cls, path) -> "SubwordVocab":
        with open(path, encoding="utf-8") as fh:
            units = [line.rstrip("\n") for line in fh]
        units = [u for u in units if u]
        if not units or units[0] != SUBWORD_UNK:
            raise ValueError("subword vocab file must start with the unknown unit")
        return cls(units[1:])


def build_subword_vocab(words: WordFreqTable, table: MergeTable) -> SubwordVocab:
    """Every corpus character, every merge product, plus the reserved unknown.

    Merge products are included even when later merges absorb them in every
    final segmentation, so the vocabulary size is exactly the number of
    single-character types plus the number of effective merges plus one.
    """
    units: set[str] = set()
    for word in words.entries:
        units.update(word)
        units.update(segment_word(word, table).subwords)
    units.update(rule.product for rule in table.rules)
    return SubwordVocab(sorted(units))
