"""Triple-store world model, intrinsic reward, and reward shaping.

The knowledge graph is a set of <subject, relation, object> triples with an
order-independent 64-bit digest maintained incrementally.  A GlobalEdgeSet
accumulates every triple ever held across a run; the intrinsic reward for a
step is the count of triples never seen before, so each unique triple pays
out exactly once per run.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .gamedef import normalize

REL_HAS = "has"
REL_IS = "is"
REL_HAVE = "have"
REL_IN = "in"
REL_VISITED = "visited"

EMPTY_DIGEST = 0  # documented fixed digest of the empty graph


@dataclass(frozen=True)
class Triple:
    subject: str
    relation: str
    object: str

    @staticmethod
    def make(subject, relation, object):
        """Normalized construction: lowercase, trimmed, article-stripped."""
        s, r, o = normalize(subject), normalize(relation), normalize(object)
        if not (s and r and o):
            raise ValueError(f"triple fields must be non-empty: {(s, r, o)!r}")
        return Triple(s, r, o)

    def line(self):
        return f"{self.subject}\t{self.relation}\t{self.object}"


def triple_digest(triple):
    raw = hashlib.blake2b(triple.line().encode(), digest_size=8).digest()
    return int.from_bytes(raw, "big")


class KnowledgeGraph:
    """Mutable triple set with set semantics and an incremental XOR digest."""

    __slots__ = ("triples", "step", "_digest")

    def __init__(self, triples=(), step=0):
        self.triples = set()
        self.step = step
        self._digest = EMPTY_DIGEST
        for t in triples:
            self.add(t)

    def add(self, triple):
        if triple not in self.triples:
            self.triples.add(triple)
            self._digest ^= triple_digest(triple)
            return True
        return False

    def discard(self, triple):
        if triple in self.triples:
            self.triples.remove(triple)
            self._digest ^= triple_digest(triple)
            return True
        return False

    def copy(self):
        clone = KnowledgeGraph(step=self.step)
        clone.triples = set(self.triples)
        clone._digest = self._digest
        return clone

    def entities(self):
        out = set()
        for t in self.triples:
            out.add(t.subject)
            out.add(t.object)
        return out

    def __len__(self):
        return len(self.triples)

    def __contains__(self, triple):
        return triple in self.triples

    def __eq__(self, other):
        return isinstance(other, KnowledgeGraph) and self.triples == other.triples


def kg_hash(graph):
    """Order-independent 64-bit digest; equal triple sets give equal digests."""
    return graph._digest


class GlobalEdgeSet:
    """Union of all triples ever held; monotonically non-decreasing."""

    __slots__ = ("triples",)

    def __init__(self):
        self.triples = set()

    def absorb(self, triples):
        """Add triples; returns the number never seen before."""
        new = 0
        for t in triples:
            if t not in self.triples:
                self.triples.add(t)
                new += 1
        return new

    def __len__(self):
        return len(self.triples)

    def __contains__(self, triple):
        return triple in self.triples


def apply_answers(graph, answers, prev_action=None, movement=None):
    """Apply the four update rules plus location-tracking to the graph.

    Returns (added, removed) triple lists.  Rules: room-has-item,
    object-is-attribute, you-have-item, room-direction-room on movement.
    The <you, in, room> triple is replaced, never accumulated; visited-room
    triples accumulate.
    """
    added, removed = [], []

    def put(triple):
        if graph.add(triple):
            added.append(triple)

    loc = normalize(answers.location) if answers.location else ""
    if loc:
        here = Triple.make("you", REL_IN, loc)
        for t in [t for t in graph.triples
                  if t.subject == "you" and t.relation == REL_IN and t != here]:
            graph.discard(t)
            removed.append(t)
        put(here)
        put(Triple.make(loc, REL_VISITED, "yes"))
        for item in answers.surroundings:
            put(Triple.make(loc, REL_HAS, item))
    for item in answers.inventory:
        put(Triple.make("you", REL_HAVE, item))
    for obj, attrs in sorted(answers.attributes.items()):
        for attr in attrs:
            put(Triple.make(obj, REL_IS, attr))
    if movement is not None:
        origin, direction, target = movement
        put(Triple.make(origin, f"{direction} of", target))
    graph.step += 1
    return added, removed


def update(graph, answers, prev_action=None, movement=None):
    """Convenience wrapper over apply_answers; returns the updated graph."""
    apply_answers(graph, answers, prev_action, movement)
    return graph


def im_reward(graph, global_edges):
    """Intrinsic reward: count of triples never before seen in the run.

    Returns (r_im, global_edges); the global set is updated in place and
    returned for chaining.
    """
    r_im = global_edges.absorb(graph.triples)
    return r_im, global_edges


def shaped_reward(r_game, episode_score, r_max, r_im, alpha=1.0, eps=1.0,
                  score_term_mode="cumulative"):
    """Game reward plus score-scaled intrinsic bonus.

    r = r_game + alpha * r_im * (score_term + eps) / r_max where score_term
    is the cumulative episode score by default, or the step reward when
    score_term_mode == "step".
    """
    if r_max <= 0:
        raise ValueError("r_max must be positive")
    if alpha < 0 or eps < 0:
        raise ValueError("alpha and eps must be non-negative")
    if score_term_mode == "cumulative":
        score_term = episode_score
    elif score_term_mode == "step":
        score_term = r_game
    else:
        raise ValueError(f"unknown score_term_mode {score_term_mode!r}")
    return r_game + alpha * r_im * (score_term + eps) / r_max


def serialize_triples(graph):
    """One normalized triple per line, tab-separated, sorted."""
    return "\n".join(sorted(t.line() for t in graph.triples))


def parse_triples(text):
    graph = KnowledgeGraph()
    for line in text.splitlines():
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"bad triple line {line!r}")
        graph.add(Triple.make(*parts))
    return graph
