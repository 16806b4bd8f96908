import pytest

from questkg import kg
from questkg.extraction import AnswerSet
from questkg.kg import (EMPTY_DIGEST, GlobalEdgeSet, KnowledgeGraph, Triple,
                        apply_answers, im_reward, kg_hash, parse_triples,
                        serialize_triples, shaped_reward)


def test_triple_make_normalizes():
    t = Triple.make("The Brass Lamp", "IS", " lit ")
    assert t == Triple("brass lamp", "is", "lit")


def test_triple_make_rejects_empty_fields():
    with pytest.raises(ValueError):
        Triple.make("the", "is", "lit")


def test_kg_hash_is_order_independent():
    a = KnowledgeGraph([Triple("x", "is", "y"), Triple("p", "has", "q")])
    b = KnowledgeGraph([Triple("p", "has", "q"), Triple("x", "is", "y")])
    assert kg_hash(a) == kg_hash(b)
    assert kg_hash(KnowledgeGraph()) == EMPTY_DIGEST


def test_add_discard_restores_digest():
    graph = KnowledgeGraph([Triple("x", "is", "y")])
    before = kg_hash(graph)
    t = Triple("p", "has", "q")
    assert graph.add(t)
    assert not graph.add(t)          # idempotent
    assert kg_hash(graph) != before
    assert graph.discard(t)
    assert not graph.discard(t)
    assert kg_hash(graph) == before


def test_copy_is_independent():
    graph = KnowledgeGraph([Triple("x", "is", "y")])
    clone = graph.copy()
    clone.add(Triple("p", "has", "q"))
    assert len(graph) == 1 and len(clone) == 2
    assert graph == KnowledgeGraph([Triple("x", "is", "y")])


def test_apply_answers_update_rules():
    graph = KnowledgeGraph()
    answers = AnswerSet(location="West of House",
                        surroundings=("mailbox", "north"),
                        inventory=("leaflet",),
                        attributes={"mailbox": ("openable", "container")})
    added, removed = apply_answers(graph, answers)
    assert removed == []
    assert Triple("you", "in", "west of house") in graph
    assert Triple("west of house", "visited", "yes") in graph
    assert Triple("west of house", "has", "mailbox") in graph
    assert Triple("you", "have", "leaflet") in graph
    assert Triple("mailbox", "is", "openable") in graph
    assert len(added) == len(graph)


def test_you_in_is_replaced_and_visited_accumulates():
    graph = KnowledgeGraph()
    apply_answers(graph, AnswerSet(location="Hall"))
    added, removed = apply_answers(graph, AnswerSet(location="Closet"))
    assert removed == [Triple("you", "in", "hall")]
    assert Triple("you", "in", "closet") in graph
    assert Triple("hall", "visited", "yes") in graph
    assert Triple("closet", "visited", "yes") in graph


def test_movement_adds_directional_triple():
    graph = KnowledgeGraph()
    apply_answers(graph, AnswerSet(location="Closet"),
                  movement=("hall", "north", "closet"))
    assert Triple("hall", "north of", "closet") in graph


def test_im_reward_pays_each_triple_exactly_once():
    graph = KnowledgeGraph([Triple("x", "is", "y"), Triple("p", "has", "q")])
    shared = GlobalEdgeSet()
    r1, shared = im_reward(graph, shared)
    assert r1 == 2
    r2, shared = im_reward(graph, shared)
    assert r2 == 0
    graph.add(Triple("new", "is", "thing"))
    r3, _ = im_reward(graph, shared)
    assert r3 == 1
    assert len(shared) == 3


def test_shaped_reward_alpha_zero_is_raw():
    for r_game in (0, 5, 10):
        assert shaped_reward(r_game, 17, 50, 4, alpha=0.0) == r_game


def test_shaped_reward_cumulative_and_step_modes():
    cumulative = shaped_reward(5, 20, 50, 2, alpha=1.0, eps=1.0)
    assert cumulative == pytest.approx(5 + 2 * (20 + 1) / 50)
    stepwise = shaped_reward(5, 20, 50, 2, alpha=1.0, eps=1.0,
                             score_term_mode="step")
    assert stepwise == pytest.approx(5 + 2 * (5 + 1) / 50)


def test_shaped_reward_validates_inputs():
    with pytest.raises(ValueError):
        shaped_reward(0, 0, 0, 1)
    with pytest.raises(ValueError):
        shaped_reward(0, 0, 50, 1, alpha=-1)
    with pytest.raises(ValueError):
        shaped_reward(0, 0, 50, 1, score_term_mode="bogus")


def test_serialize_parse_round_trip():
    graph = KnowledgeGraph([Triple("x", "is", "y"), Triple("p", "has", "q"),
                            Triple("hall", "north of", "closet")])
    text = serialize_triples(graph)
    assert parse_triples(text) == graph
    assert serialize_triples(parse_triples(text)) == text


def test_parse_triples_rejects_bad_lines():
    with pytest.raises(ValueError):
        parse_triples("only two\tfields")
