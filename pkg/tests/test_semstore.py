import random
from importlib import resources

import pytest
from hypothesis import given, strategies as st

from semdeg import semstore
from semdeg.semstore import (
    CycleDetected, DuplicateTerm, KnowledgeBase, NoDescription, UnknownTerm, transitive_closure,
)

from oracles import floyd_warshall_closure, random_digraph


@pytest.fixture
def kb():
    text = resources.files("semdeg.data").joinpath("plug_and_sense.kb").read_text("utf-8")
    return semstore.loads(text)


def test_glossary_lookup(kb):
    assert kb.describe("Q16202NO/AHY01") == "nitrogen dioxide too high"
    with pytest.raises(NoDescription):
        kb.describe("Kelvin")
    with pytest.raises(UnknownTerm):
        kb.describe("nope")


def test_synonym_canonicalization(kb):
    assert kb.canonicalize("Bluetooth-Device_000A3A58F310") == "temperature-sensor"
    assert kb.canonicalize("temperature-sensor") == "temperature-sensor"
    assert kb.aliases("temperature-sensor") == ["Bluetooth-Device_000A3A58F310"]


def test_taxonomy_subtyping(kb):
    assert kb.is_subtype("thermocouple", "device")
    assert kb.is_subtype("sensor", "sensor")
    assert not kb.is_subtype("pressure-sensor", "temperature-sensor")
    assert kb.ancestors("thermocouple") == {"thermocouple", "temperature-sensor", "sensor", "device"}
    assert kb.parents("temperature-sensor") == ["sensor"]


def test_taxonomy_cycle_rejected(kb):
    with pytest.raises(CycleDetected):
        kb.add_taxonomy_edge("device", "thermocouple")
    with pytest.raises(CycleDetected):
        kb.add_taxonomy_edge("device", "device")
    assert kb.check_integrity() == []


def test_duplicate_and_unknown_terms():
    kb = KnowledgeBase().define_term("a")
    with pytest.raises(DuplicateTerm):
        kb.define_term("a")
    kb.ensure_term("a")
    with pytest.raises(UnknownTerm):
        kb.add_synonym("a", "b")


def test_synonym_chain_flattened_and_cycle():
    kb = KnowledgeBase()
    for t in "abc":
        kb.define_term(t)
    kb.add_synonym("b", "c")
    kb.add_synonym("a", "b")
    assert kb.canonicalize("a") == "c"
    kb2 = KnowledgeBase()
    for t in "xyz":
        kb2.define_term(t)
    kb2.add_synonym("x", "y")
    kb2.add_synonym("y", "z")
    assert kb2.canonicalize("x") == "z"
    with pytest.raises(CycleDetected):
        kb2.add_synonym("z", "x")


def test_triples_and_closure():
    kb = KnowledgeBase()
    for t in ("a", "b", "c", "partOf", "near"):
        kb.define_term(t)
    kb.add_triple("a", "partOf", "b").add_triple("b", "partOf", "c").add_triple("a", "near", "c")
    assert kb.query_triples(relation="partOf") == [("a", "partOf", "b"), ("b", "partOf", "c")]
    assert kb.query_triples(subject="a", object="c") == [("a", "near", "c")]
    assert kb.transitive_closure("partOf") == {("a", "b"), ("b", "c"), ("a", "c")}


def test_closure_excludes_self_pairs_on_cycles():
    assert transitive_closure([("a", "b"), ("b", "a")]) == {("a", "b"), ("b", "a")}


def test_closure_matches_oracle_random():
    rng = random.Random(7)
    for _ in range(500):
        nodes, edges = random_digraph(rng, 6)
        assert transitive_closure(edges) == floyd_warshall_closure(nodes, edges)


@given(st.sets(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=20))
def test_closure_is_transitive(edges):
    c = transitive_closure(edges)
    for a, b in c:
        for b2, d in c:
            if b == b2 and a != d:
                assert (a, d) in c
    assert {(a, b) for a, b in edges if a != b} <= c


def test_snapshot_is_independent(kb):
    snap = kb.snapshot()
    kb.define_term("new-term")
    assert not snap.has_term("new-term")


def test_round_trip(tmp_path, kb):
    path = tmp_path / "kb.txt"
    semstore.save(kb, path)
    again = semstore.load(path)
    assert semstore.dumps(again) == semstore.dumps(kb)
    assert again.canonicalize("Bluetooth-Device_000A3A58F310") == "temperature-sensor"


def test_loads_errors():
    with pytest.raises(ValueError, match="line 1"):
        semstore.loads("BOGUS\tx\n")
    with pytest.raises(ValueError, match="line 2"):
        semstore.loads("TERM\ta\nTAX\ta\tb\n")
