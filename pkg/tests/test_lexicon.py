import pytest

from vctrace.errors import TableFormatError
from vctrace.lexicon import LexEntry, Lexicon


def test_resolve_exact(lexicon):
    r = lexicon.resolve("TP53")
    assert r.resolved and r.match_kind == "exact" and r.entity_id == "GENE:TP53"


def test_resolve_case_folded(lexicon):
    r = lexicon.resolve("tp53")
    assert r.resolved and r.entity_id == "GENE:TP53"


def test_resolve_synonym(lexicon):
    r = lexicon.resolve("BAY 43-9006")
    assert r.match_kind == "synonym" and r.entity_id == "CHEM:sorafenib"


def test_resolve_absent(lexicon):
    r = lexicon.resolve("XYZZY-42")
    assert r.match_kind == "none" and r.entity_id is None and not r.resolved


def test_resolve_type_hint_restricts(lexicon):
    assert lexicon.resolve("EGFR", type_hint="gene").resolved
    assert not lexicon.resolve("EGFR", type_hint="compound").resolved


def test_resolve_idempotent_over_canonicals(lexicon):
    for entry in lexicon.entries:
        r = lexicon.resolve(entry.canonical, type_hint=entry.entity_type)
        assert r.entity_id == entry.entity_id


def test_ambiguity_flagged_and_smallest_id_wins():
    lex = Lexicon(
        [
            LexEntry("G:b", "gene", "ABC1"),
            LexEntry("G:a", "gene", "ABC1"),
        ]
    )
    r = lex.resolve("abc1")
    assert r.entity_id == "G:a" and r.ambiguous


def test_canonical_match_beats_synonym():
    lex = Lexicon(
        [
            LexEntry("G:syn", "gene", "OTHER", synonyms=("ABC1",)),
            LexEntry("G:canon", "gene", "ABC1"),
        ]
    )
    r = lex.resolve("ABC1")
    assert r.entity_id == "G:canon" and r.match_kind == "exact"


def test_duplicate_entity_id_rejected():
    with pytest.raises(TableFormatError):
        Lexicon([LexEntry("x", "gene", "A"), LexEntry("x", "gene", "B")])


def test_extract_entities_spans(lexicon):
    text = "sorafenib in HepG2/C3A cells"
    hits = lexicon.extract_entities(text)
    surfaces = [(s, span) for s, _r, span in hits]
    assert ("sorafenib", (0, 9)) in surfaces
    assert ("HepG2/C3A", (13, 22)) in surfaces
    for surface, resolved, (start, end) in hits:
        assert text.encode()[start:end].decode() == surface
        assert resolved.resolved


def test_extract_entities_none(lexicon):
    assert lexicon.extract_entities("nothing relevant here") == []


def test_extract_entities_repeated_mention(lexicon):
    text = "EGFR-mutant EGFR"
    hits = lexicon.extract_entities(text)
    egfr = [h for h in hits if h[0] == "EGFR"]
    assert len(egfr) == 2
    spans = [span for _s, _r, span in egfr]
    assert spans == [(0, 4), (12, 16)]


def test_extract_prefers_longer_match():
    lex = Lexicon(
        [
            LexEntry("P:m", "pathway", "MAPK"),
            LexEntry("P:ms", "pathway", "MAPK signaling"),
        ]
    )
    hits = lex.extract_entities("the MAPK signaling axis")
    assert [h[0] for h in hits] == ["MAPK signaling"]


def test_extract_respects_word_boundaries(lexicon):
    # "C32" must not match inside "C320"
    hits = lexicon.extract_entities("sample C320 is not cell line C32")
    c32 = [h for h in hits if h[0] == "C32"]
    assert len(c32) == 1
    assert c32[0][2] == (29, 32)


def test_extract_spans_never_overlap(lexicon):
    text = "sorafenib BAY 43-9006 EGFR p53 MAPK signaling HepG2/C3A"
    hits = lexicon.extract_entities(text)
    last_end = 0
    for _s, _r, (start, end) in hits:
        assert start >= last_end
        last_end = end


def test_extract_byte_offsets_with_multibyte_text(lexicon):
    text = "αβγ sorafenib"
    hits = lexicon.extract_entities(text)
    assert len(hits) == 1
    surface, _r, (start, end) = hits[0]
    assert text.encode("utf-8")[start:end].decode() == "sorafenib"


def brute_force_matches(lex, text):
    """Naive O(n^2) longest-match scan used as the extraction oracle."""
    surfaces = set()
    for entry in lex.entries:
        surfaces.add(entry.canonical.casefold())
        surfaces.update(s.casefold() for s in entry.synonyms)

    def word(ch):
        return ch.isalnum() or ch == "_"

    out = []
    i = 0
    while i < len(text):
        if i > 0 and word(text[i - 1]) and word(text[i]):
            i += 1
            continue
        best = 0
        for length in range(len(text) - i, 0, -1):
            cand = text[i:i + length].casefold()
            if cand in surfaces:
                end = i + length
                if end < len(text) and word(text[end]) and word(text[end - 1]):
                    continue
                best = length
                break
        if best:
            out.append((text[i:i + best], i, i + best))
            i += best
        else:
            i += 1
    return out


def test_extraction_agrees_with_brute_force(lexicon):
    texts = [
        "sorafenib in HepG2/C3A cells",
        "EGFR-mutant EGFR and KRAS with p53 loss",
        "BAY 43-9006 aka sorafenib targets BRAF in melanoma",
        "nothing to see",
        "MAPK signaling and MAPK again, plus PANC1 too",
    ]
    for text in texts:
        expected = brute_force_matches(lexicon, text)
        got = [
            (s, len(text.encode()[:0]) + start, end)
            for s, _r, (start, end) in lexicon.extract_entities(text)
        ]
        # all fixture texts are ASCII: byte offsets equal char offsets
        assert [(s, a, b) for s, a, b in got] == expected
