import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kgnn.knowledge import (
    BACKWARD,
    COREF,
    DEFAULT_RELATIONS,
    FORWARD,
    EntityRecord,
    KnowledgeStore,
    KnowledgeStoreError,
    Mention,
    RelationTriple,
    RelationVocabulary,
    link_mentions,
    load_store,
    query_relations,
)
from kgnn.text import TokenizedText, tokenize

from conftest import FIXTURES


def test_default_vocabulary_has_five_relations_and_coref_first():
    vocab = RelationVocabulary()
    assert vocab.relations == ("director", "position_held", "record_label", "lyrics_by", "adapted_from")
    assert vocab.index(COREF) == 0
    assert len(vocab) == 6


def test_vocabulary_rejects_duplicates():
    with pytest.raises(ValueError):
        RelationVocabulary(("a", "b", "a"))


def test_canonical_name_is_an_alias():
    rec = EntityRecord("e", "Max Martin", ("Martin",))
    assert "Max Martin" in rec.aliases


def _write(tmp_path, entities, triples):
    ents = tmp_path / "entities.jsonl"
    ents.write_text("".join(json.dumps(e) + "\n" for e in entities))
    tri = tmp_path / "triples.tsv"
    tri.write_text(triples)
    return ents, tri


ENTITIES = [
    {"id": "wd", "name": "Wildest Dreams", "aliases": []},
    {"id": "mm", "name": "Max Martin", "aliases": ["Martin"]},
    {"id": "bm", "name": "Big Machine"},
]


def test_fixture_round_trip_returns_both_triples(tmp_path):
    ents, tri = _write(tmp_path, ENTITIES, "wd\tlyrics_by\tmm\n# comment\nwd\trecord_label\tbm\n")
    store = load_store(ents, tri)
    assert len(store) == 3 and len(store.triples) == 2
    assert store.query_relations("wd", "mm") == [("lyrics_by", FORWARD)]
    assert store.query_relations("wd", "bm") == [("record_label", FORWARD)]


def test_empty_triples_file_is_valid(tmp_path):
    ents, tri = _write(tmp_path, ENTITIES, "")
    assert load_store(ents, tri).triples == []


def test_duplicate_triple_stored_once(tmp_path):
    ents, tri = _write(tmp_path, ENTITIES, "wd\tlyrics_by\tmm\nwd\tlyrics_by\tmm\n")
    assert len(load_store(ents, tri).triples) == 1


def test_unknown_entity_reports_line_number(tmp_path):
    ents, tri = _write(tmp_path, ENTITIES, "wd\tlyrics_by\tmm\n\nwd\tlyrics_by\tnobody\n")
    with pytest.raises(KnowledgeStoreError, match=r"triples.tsv:3:.*nobody"):
        load_store(ents, tri)


def test_unknown_relation_rejected(tmp_path):
    ents, tri = _write(tmp_path, ENTITIES, "wd\tcomposer\tmm\n")
    with pytest.raises(KnowledgeStoreError, match="composer"):
        load_store(ents, tri)


def test_malformed_lines_rejected(tmp_path):
    ents, tri = _write(tmp_path, ENTITIES, "wd lyrics_by mm\n")
    with pytest.raises(KnowledgeStoreError, match=":1:"):
        load_store(ents, tri)
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "x", "name": "X"}\n{"name": "no id"}\n')
    with pytest.raises(KnowledgeStoreError, match=":2:"):
        load_store(bad, tri)


def test_self_relation_and_duplicate_ids_rejected():
    with pytest.raises(KnowledgeStoreError):
        KnowledgeStore([EntityRecord("a", "A")], [RelationTriple("a", "director", "a")])
    with pytest.raises(KnowledgeStoreError):
        KnowledgeStore([EntityRecord("a", "A"), EntityRecord("a", "B")])


def _gazetteer(extra=()):
    ents = [EntityRecord("e1", "Wildest Dreams"), EntityRecord("e2", "Taylor")] + list(extra)
    return KnowledgeStore(ents)


def test_link_hand_traced_example():
    text = TokenizedText(["Wildest", "Dreams", "by", "Taylor"])
    assert link_mentions(text, _gazetteer()) == [Mention(0, 0, 1, "e1"), Mention(0, 3, 3, "e2")]


def test_longest_match_wins():
    store = _gazetteer([EntityRecord("e3", "Dreams")])
    text = TokenizedText(["Wildest", "Dreams", "by", "Taylor"])
    assert link_mentions(text, store)[0] == Mention(0, 0, 1, "e1")
    assert link_mentions(TokenizedText(["Dreams"]), store) == [Mention(0, 0, 0, "e3")]


def test_linking_is_case_insensitive_and_punctuation_sensitive():
    store = _gazetteer()
    assert [m.entity_id for m in link_mentions(tokenize("wildest DREAMS"), store)] == ["e1"]
    assert link_mentions(tokenize("Wildest-Dreams"), store) == []


def test_no_aliases_in_text():
    assert link_mentions(tokenize("nothing to see here"), _gazetteer()) == []


def test_query_directions_and_errors(store):
    assert query_relations("wd", "mm", store) == [("lyrics_by", FORWARD)]
    assert query_relations("mm", "wd", store) == [("lyrics_by", BACKWARD)]
    assert query_relations("ts", "mm", store) == []
    with pytest.raises(KnowledgeStoreError):
        query_relations("wd", "unknown", store)


WORDS = ["alpha", "beta", "gamma", "delta", "x", "y", "."]
ALIASES = [("a", "alpha beta"), ("b", "beta"), ("c", "gamma delta x"), ("d", "y")]


def _random_store():
    return KnowledgeStore([EntityRecord(i, name) for i, name in ALIASES])


@given(st.lists(st.sampled_from(WORDS), max_size=12), st.lists(st.sampled_from(WORDS), max_size=12))
def test_linking_deterministic_non_overlapping_and_splits(left, right):
    store = _random_store()
    whole = store.link_mentions(TokenizedText(left + right))
    again = store.link_mentions(TokenizedText(left + right))
    assert whole == again
    for a, b in zip(whole, whole[1:]):
        assert a.end < b.start
    # a "." token never matches, so the halves link independently when separated by one
    joined = store.link_mentions(TokenizedText(left + ["."] + right))
    first = store.link_mentions(TokenizedText(left))
    second = [Mention(0, m.start + len(left) + 1, m.end + len(left) + 1, m.entity_id)
              for m in store.link_mentions(TokenizedText(right))]
    assert joined == first + second


@given(st.lists(st.tuples(st.sampled_from("abcd"), st.sampled_from(DEFAULT_RELATIONS), st.sampled_from("abcd")), max_size=10))
def test_query_forward_equals_reverse_backward(triples):
    ents = [EntityRecord(x, x.upper() * 2) for x in "abcd"]
    store = KnowledgeStore(ents, [RelationTriple(*t) for t in triples if t[0] != t[2]])
    for a in "abcd":
        for b in "abcd":
            fwd = [r for r, d in store.query_relations(a, b) if d == FORWARD]
            bwd = [r for r, d in store.query_relations(b, a) if d == BACKWARD]
            assert fwd == bwd


def test_fig1_fixture_loads():
    store = load_store(FIXTURES / "fig1" / "entities.jsonl", FIXTURES / "fig1" / "triples.tsv")
    assert store.query_relations("wd", "mm") == [("lyrics_by", FORWARD)]
