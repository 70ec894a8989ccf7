"""Biomedical entity lexicon: mention resolution and dictionary NER.

Resolution is exact case-folded matching on canonical names first, then
synonyms; extraction is a greedy longest-match scan over word
boundaries. No fuzzy matching here by design: downstream verifiability
should measure the generator, not the resolver's generosity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from vctrace.errors import TableFormatError
from vctrace.ioutil import read_tsv

ENTITY_TYPES = (
    "compound",
    "gene",
    "protein",
    "cell_line",
    "disease",
    "pathway",
    "phenotype",
    "compartment",
)


@dataclass(frozen=True)
class LexEntry:
    entity_id: str
    entity_type: str
    canonical: str
    synonyms: tuple[str, ...] = ()


@dataclass(frozen=True)
class ResolvedEntity:
    entity_id: str | None
    entity_type: str | None
    matched_surface: str
    match_kind: str  # exact | synonym | none
    ambiguous: bool = False

    @property
    def resolved(self) -> bool:
        return self.match_kind != "none"


def no_match(mention: str) -> ResolvedEntity:
    return ResolvedEntity(None, None, mention, "none")


class Lexicon:
    """Immutable after construction; lookups are case-folded."""

    def __init__(self, entries: list[LexEntry]):
        self.entries = list(entries)
        self._by_id: dict[str, LexEntry] = {}
        # surface -> list of (entry, is_canonical)
        self._index: dict[str, list[tuple[LexEntry, bool]]] = {}
        for entry in entries:
            if entry.entity_id in self._by_id:
                raise TableFormatError(f"duplicate entity_id: {entry.entity_id}")
            if not entry.canonical:
                raise TableFormatError(f"{entry.entity_id}: empty canonical name")
            self._by_id[entry.entity_id] = entry
            self._index.setdefault(entry.canonical.casefold(), []).append((entry, True))
            for syn in entry.synonyms:
                if syn:
                    self._index.setdefault(syn.casefold(), []).append((entry, False))
        self._trie = _build_trie(self._index)

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, entity_id: str) -> LexEntry | None:
        return self._by_id.get(entity_id)

    def resolve(self, mention: str, type_hint: str | None = None) -> ResolvedEntity:
        """Case-insensitive exact match on canonical names, then synonyms.

        A type hint restricts candidates. Ties across entities go to the
        lexicographically smallest entity_id, flagged ambiguous.
        """
        hits = self._index.get(mention.strip().casefold(), [])
        if type_hint is not None:
            hits = [(e, c) for e, c in hits if e.entity_type == type_hint]
        for want_canonical, kind in ((True, "exact"), (False, "synonym")):
            pool = sorted(
                {e.entity_id: e for e, c in hits if c == want_canonical}.values(),
                key=lambda e: e.entity_id,
            )
            if pool:
                return ResolvedEntity(
                    entity_id=pool[0].entity_id,
                    entity_type=pool[0].entity_type,
                    matched_surface=mention,
                    match_kind=kind,
                    ambiguous=len(pool) > 1,
                )
        return no_match(mention)

    def extract_entities(self, text: str) -> list[tuple[str, ResolvedEntity, tuple[int, int]]]:
        """Greedy longest-match scan; spans are half-open byte offsets.

        Matches must start and end at word boundaries; overlaps resolve in
        favor of the longer (earlier-starting) match.
        """
        folded = text.casefold()
        if len(folded) != len(text):
            # rare case folding that changes length; fall back to lower()
            folded = text.lower()
            if len(folded) != len(text):
                folded = text
        results = []
        i = 0
        n = len(text)
        while i < n:
            if _is_word_char(text[i]) and i > 0 and _is_word_char(text[i - 1]):
                i += 1
                continue
            length = self._trie.longest_match(folded, i, n)
            while length > 0:
                end = i + length
                if end >= n or not _is_word_char(text[end]) or not _is_word_char(text[end - 1]):
                    break
                length = self._trie.longest_match(folded, i, length - 1 + i)
            if length > 0:
                surface = text[i:i + length]
                resolved = self.resolve(surface)
                byte_start = len(text[:i].encode("utf-8"))
                byte_end = byte_start + len(surface.encode("utf-8"))
                results.append((surface, resolved, (byte_start, byte_end)))
                i += length
            else:
                i += 1
        return results


def _is_word_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


@dataclass
class _TrieNode:
    children: dict[str, "_TrieNode"] = field(default_factory=dict)
    terminal: bool = False


class _Trie:
    def __init__(self):
        self.root = _TrieNode()

    def insert(self, word: str) -> None:
        node = self.root
        for ch in word:
            node = node.children.setdefault(ch, _TrieNode())
        node.terminal = True

    def longest_match(self, text: str, start: int, limit: int) -> int:
        """Length of the longest inserted word matching text[start:limit]."""
        node = self.root
        best = 0
        i = start
        while i < limit:
            node = node.children.get(text[i])
            if node is None:
                break
            i += 1
            if node.terminal:
                best = i - start
        return best


def _build_trie(index: dict[str, list]) -> _Trie:
    trie = _Trie()
    for surface in index:
        trie.insert(surface)
    return trie


def load_lexicon_tsv(path: str | Path) -> Lexicon:
    """Lexicon TSV: entity_id, entity_type, canonical, synonyms (pipes)."""
    rows = read_tsv(path, ["entity_id", "entity_type", "canonical", "synonyms"])
    entries = []
    for row in rows:
        if row["entity_type"] not in ENTITY_TYPES:
            raise TableFormatError(
                f"{path}: unknown entity_type {row['entity_type']!r} for {row['entity_id']}"
            )
        entries.append(
            LexEntry(
                entity_id=row["entity_id"],
                entity_type=row["entity_type"],
                canonical=row["canonical"],
                synonyms=tuple(s for s in row["synonyms"].split("|") if s),
            )
        )
    return Lexicon(entries)
