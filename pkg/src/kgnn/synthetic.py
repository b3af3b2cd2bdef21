"""Synthetic multi-hop bridge questions over a small consistent knowledge base.

Every question follows one chain A -> B -> D -> E:

* paragraph P1 is about a person A and says, in plain text, that A sang (or
  starred in) B; this link is not a knowledge-base fact;
* paragraph P2 is about B and states r(B, D) for r = lyrics_by or director,
  next to a second fact of B;
* paragraph P3 is about the post E that D held; it never names D, so the only
  path from B to E runs through D's mention in P2 and the position_held triple;
* the question names A and asks for the post held by the r-tail of B.

Decoy chains repeat P2 and P3 for other songs (films) without a P1, so the
answer is separated from the decoys only by carrying A's context along two
graph edges: B@P1 -> D@P2 and then D@P2 -> E@P3.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Example, Paragraph, prepare_example, write_corpus
from .graph import GraphConfig
from .knowledge import COREF, DEFAULT_RELATIONS, FORWARD, EntityRecord, KnowledgeStore, RelationTriple, RelationVocabulary

log = logging.getLogger(__name__)

# relation -> (head type, tail type)
SCHEMA = {
    "director": ("film", "person"),
    "position_held": ("person", "position"),
    "record_label": ("song", "label"),
    "lyrics_by": ("song", "person"),
    "adapted_from": ("film", "work"),
}
TYPE_SHARE = {"person": 0.4, "song": 0.15, "film": 0.15, "label": 0.1, "work": 0.1, "position": 0.1}

FACTS = {
    "director": "{h} was directed by {t} .",
    "position_held": "{h} held the position of {t} .",
    "record_label": "{h} was released by {t} .",
    "lyrics_by": "The lyrics of {h} were written by {t} .",
    "adapted_from": "{h} was adapted from {t} .",
}
SECOND_HOP = "position_held"
QUESTIONS = {
    "director": "Which post was held by the director of the film that {a} starred in ?",
    "lyrics_by": "Which post was held by the lyricist of the song that {a} sang ?",
}
LINKS = {"song": "{a} sang {b} .", "film": "{a} starred in {b} ."}
INTROS = {"song": "{b} is a song .", "film": "{b} is a film ."}
ANSWER_INTRO = "{e} is a government post created in {year} ."
BORN = "{x} was born in {year} ."

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


class SyntheticSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Generator settings. The gold chain takes three paragraphs and each decoy
    chain two; an odd leftover becomes a lone person paragraph."""

    num_entities: int = 600
    relations: tuple[str, ...] = DEFAULT_RELATIONS
    num_questions: int = 1000
    paragraphs_per_question: int = 7
    seed: int = 0
    world_seed: int = 0
    question_relations: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.paragraphs_per_question < 3:
            raise SyntheticSpecError("paragraphs_per_question must be >= 3 for a three-paragraph chain")
        if self.num_questions < 0:
            raise SyntheticSpecError("num_questions must be >= 0")
        unknown = [r for r in self.relations if r not in SCHEMA]
        if unknown:
            raise SyntheticSpecError(f"relations: no templates for {unknown}")
        if SECOND_HOP not in self.relations:
            raise SyntheticSpecError(f"relations must include {SECOND_HOP}")
        asked = self.asked_relations
        if not asked or any(r not in self.relations or r not in QUESTIONS for r in asked):
            raise SyntheticSpecError(
                f"question_relations {asked} must be a non-empty subset of relations among {sorted(QUESTIONS)}"
            )

    @property
    def distractors(self) -> int:
        return self.paragraphs_per_question - 3

    @property
    def decoy_chains(self) -> int:
        return self.distractors // 2

    @property
    def lone_paragraphs(self) -> int:
        return self.distractors % 2

    @property
    def asked_relations(self) -> tuple[str, ...]:
        if self.question_relations:
            return tuple(self.question_relations)
        return tuple(r for r in self.relations if r in QUESTIONS)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticWorld:
    store: KnowledgeStore
    types: dict[str, str]
    by_type: dict[str, list[str]]
    tails: dict[tuple[str, str], str] = field(default_factory=dict)  # (head, relation) -> tail

    def name(self, entity_id: str) -> str:
        return self.store.entities[entity_id].canonical_name

    def other_relation(self, relation: str) -> str | None:
        head = SCHEMA[relation][0]
        for r in self.store.vocabulary.relations:
            if r != relation and SCHEMA[r][0] == head:
                return r
        return None


class _Names:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.used: set[str] = set()

    def word(self) -> str:
        while True:
            n = int(self.rng.integers(2, 4))
            w = "".join(self.rng.choice(list(_CONSONANTS)) + self.rng.choice(list(_VOWELS)) for _ in range(n))
            if w not in self.used:
                self.used.add(w)
                return w.capitalize()

    def make(self, kind: str) -> str:
        if kind == "label":
            return f"{self.word()} Records"
        if kind == "position":
            return f"Minister of {self.word()}"
        if kind == "song":
            return self.word()
        return f"{self.word()} {self.word()}"


def _needed(spec: SyntheticTaskSpec) -> dict[str, int]:
    """Fewest entities of each type one question can require."""
    need = {t: 0 for t in TYPE_SHARE}
    chains = spec.decoy_chains + 1
    for rel in spec.asked_relations:
        head = SCHEMA[rel][0]
        per = {t: 0 for t in TYPE_SHARE}
        per["person"] += 1 + chains + spec.lone_paragraphs
        per[head] += chains + spec.lone_paragraphs
        per["position"] += chains
        for other in spec.relations:
            if other != rel and SCHEMA[other][0] == head:
                per[SCHEMA[other][1]] += chains
                break
        for t in need:
            need[t] = max(need[t], per[t])
    return need


def build_world(spec: SyntheticTaskSpec) -> SyntheticWorld:
    rng = np.random.default_rng(spec.world_seed)
    types_used = {"person"} | {t for r in spec.relations for t in SCHEMA[r]}
    share = sum(TYPE_SHARE[t] for t in types_used)
    counts = {t: int(spec.num_entities * TYPE_SHARE[t] / share) for t in sorted(types_used)}
    need = _needed(spec)
    short = {t: (counts[t], need[t]) for t in counts if counts[t] < need[t]}
    if short:
        detail = ", ".join(f"{t}: {have} < {want}" for t, (have, want) in sorted(short.items()))
        raise SyntheticSpecError(f"num_entities={spec.num_entities} too small for this spec ({detail})")

    names = _Names(rng)
    records, types, by_type = [], {}, {}
    for t in sorted(counts):
        ids = [f"{t}_{i:04d}" for i in range(counts[t])]
        by_type[t] = ids
        for eid in ids:
            records.append(EntityRecord(eid, names.make(t)))
            types[eid] = t
    store = KnowledgeStore(records, (), RelationVocabulary(tuple(spec.relations)))
    world = SyntheticWorld(store, types, by_type)
    for rel in spec.relations:
        head_type, tail_type = SCHEMA[rel]
        tails = list(rng.permutation(by_type[tail_type]))
        for i, head in enumerate(rng.permutation(by_type[head_type])):
            tail = str(tails[i % len(tails)])
            store.add_triple(RelationTriple(str(head), rel, tail))
            world.tails[(str(head), rel)] = tail
    return world


def _year(rng: np.random.Generator) -> str:
    return str(int(rng.integers(1900, 2000)))


def _bridge_paragraph(world: SyntheticWorld, bridge: str, rel: str, other: str | None, rng) -> tuple[Paragraph, int]:
    """P2-style paragraph; returns it with the index of the r-fact sentence."""
    b = world.name(bridge)
    facts = [FACTS[rel].format(h=b, t=world.name(world.tails[(bridge, rel)]))]
    if other is not None:
        facts.append(FACTS[other].format(h=b, t=world.name(world.tails[(bridge, other)])))
    else:
        facts.append(BORN.format(x=b, year=_year(rng)))
    order = rng.permutation(len(facts))
    sentences = [INTROS[world.types[bridge]].format(b=b)] + [facts[i] for i in order]
    return Paragraph(b, sentences), 1 + int(np.flatnonzero(order == 0)[0])


def _person_paragraph(world: SyntheticWorld, person: str, bridge: str, rng) -> tuple[Paragraph, int]:
    a = world.name(person)
    sentences = [LINKS[world.types[bridge]].format(a=a, b=world.name(bridge)), BORN.format(x=a, year=_year(rng))]
    if rng.random() < 0.5:
        return Paragraph(a, sentences[::-1]), 1
    return Paragraph(a, sentences), 0


def _answer_paragraph(world: SyntheticWorld, post: str, rng) -> tuple[Paragraph, int]:
    """One sentence, so the post is named exactly once."""
    e = world.name(post)
    return Paragraph(e, [ANSWER_INTRO.format(e=e, year=_year(rng))]), 0


def _related(world: SyntheticWorld, group: Sequence[str], others: Sequence[Sequence[str]]) -> bool:
    store = world.store
    return any(store.query_relations(x, y) for h in others for x in group for y in h)


def _sample_question(world: SyntheticWorld, spec: SyntheticTaskSpec, index: int, rng) -> Example:
    rel = str(rng.choice(list(spec.asked_relations)))
    other = world.other_relation(rel)
    head_type = SCHEMA[rel][0]
    chains = spec.decoy_chains + 1
    lone = spec.lone_paragraphs
    # greedy: take bridges in random order, keeping each group disjoint from and unrelated to the rest
    groups: list[list[str]] = []
    used: set[str] = set()
    for b in rng.permutation(world.by_type[head_type]):
        b = str(b)
        if len(groups) < chains:
            d = world.tails[(b, rel)]
            g = [b, d, world.tails[(d, SECOND_HOP)]]
            if other is not None:
                g.append(world.tails[(b, other)])
        else:
            g = [b]
        if len(set(g)) == len(g) and used.isdisjoint(g) and not _related(world, g, groups):
            groups.append(g)
            used.update(g)
            if len(groups) == chains + lone:
                break
    people: list[str] = []
    if len(groups) == chains + lone:
        for p in rng.permutation(world.by_type["person"]):
            p = str(p)
            if p not in used and not _related(world, [p], groups):
                people.append(p)
                used.add(p)
                if len(people) == 1 + lone:
                    break
    if len(groups) < chains + lone or len(people) < 1 + lone:
        raise SyntheticSpecError(f"could not sample disjoint chains for question {index}; raise num_entities")

    person = people[0]
    bridge, mid, answer = groups[0][:3]
    p1, link_idx = _person_paragraph(world, person, bridge, rng)
    p2, fact_idx = _bridge_paragraph(world, bridge, rel, other, rng)
    p3, post_idx = _answer_paragraph(world, answer, rng)
    paragraphs = [p1, p2, p3]
    gold_facts = [(p1.title, link_idx), (p2.title, fact_idx), (p3.title, post_idx)]
    for g in groups[1:chains]:
        paragraphs += [_bridge_paragraph(world, g[0], rel, other, rng)[0], _answer_paragraph(world, g[2], rng)[0]]
    for g, p in zip(groups[chains:], people[1:]):
        paragraphs.append(_person_paragraph(world, p, g[0], rng)[0])
    order = rng.permutation(len(paragraphs))
    paragraphs = [paragraphs[i] for i in order]

    return Example(
        id=f"syn{spec.seed}-{index:05d}",
        question=QUESTIONS[rel].format(a=world.name(person)),
        answer=world.name(answer),
        paragraphs=paragraphs,
        supporting_facts=gold_facts,
        type="bridge",
        meta={"relation": rel, "chain": [person, bridge, mid, answer], "candidates": chains},
    )


def generate_questions(world: SyntheticWorld, spec: SyntheticTaskSpec, validate: bool = True) -> list[Example]:
    rng = np.random.default_rng([spec.seed, 1])
    examples = [_sample_question(world, spec, i, rng) for i in range(spec.num_questions)]
    if validate:
        config = GraphConfig(vocabulary=world.store.vocabulary)
        for ex in examples:
            problems = validate_gold_path(ex, world.store, config)
            if problems:
                raise SyntheticSpecError(f"{ex.id}: generated question fails its gold-path check: {problems}")
    return examples


def generate_corpus(spec: SyntheticTaskSpec, validate: bool = True) -> tuple[SyntheticWorld, list[Example]]:
    world = build_world(spec)
    return world, generate_questions(world, spec, validate)


def validate_gold_path(example: Example, store: KnowledgeStore, config: GraphConfig | None = None) -> list[str]:
    """Check that the answer is reached from the question entity's paragraph by exactly
    two graph edges (bridge -> middle entity -> answer) and by no shorter path;
    returns the problems found."""
    meta = example.meta
    try:
        person, bridge, mid, answer = meta["chain"]
        rel = meta["relation"]
    except (KeyError, ValueError):
        return ["missing chain metadata"]
    problems = []
    prepared = prepare_example(example, store, config)
    graph = prepared.graph
    q_entities = {m.entity_id for m in store.link_mentions(prepared.question)}
    if person not in q_entities:
        problems.append("question does not mention the chain's first entity")
    nodes = {(n.entity_id, n.paragraph_id): n.node_id for n in graph.nodes}
    titles = [p.title for p in example.paragraphs]
    names = {e: store.entities[e].canonical_name for e in (person, bridge, answer)}
    if any(names[e] not in titles for e in names):
        return problems + ["missing gold paragraph"]
    p1, p2, p3 = titles.index(names[person]), titles.index(names[bridge]), titles.index(names[answer])
    need = {"A@P1": (person, p1), "B@P1": (bridge, p1), "B@P2": (bridge, p2), "D@P2": (mid, p2), "E@P3": (answer, p3)}
    missing = [k for k, key in need.items() if key not in nodes]
    if missing:
        return problems + [f"unlinked gold mentions {missing}"]
    b1, b2, d2, e3 = (nodes[need[k]] for k in ("B@P1", "B@P2", "D@P2", "E@P3"))
    if b2 not in graph.neighbors(b1, graph.kind_index(COREF)):
        problems.append("no co-reference edge between the bridge mentions")
    if b1 not in graph.neighbors(d2, graph.kind_index(rel, FORWARD)):
        problems.append(f"no {rel} edge from the bridge into the middle entity")
    if d2 not in graph.neighbors(e3, graph.kind_index(SECOND_HOP, FORWARD)):
        problems.append(f"no {SECOND_HOP} edge from the middle entity into the answer")
    if len([n for n in graph.nodes if n.entity_id == answer]) != 1:
        problems.append("answer entity mentioned more than once")
    if [n.paragraph_id for n in graph.nodes if n.entity_id == mid] != [p2]:
        problems.append("middle entity mentioned outside the bridge paragraph")
    # one-step shortcut: anything in P1 linked straight into P3
    into_answer = {e.src for e in graph.edges if graph.nodes[e.dst].paragraph_id == p3}
    if any(graph.nodes[s].paragraph_id == p1 for s in into_answer):
        problems.append("an edge joins the question entity's paragraph to the answer paragraph")
    chain_paragraphs = {p1, p2, p3}
    for e in graph.edges:
        ends = {graph.nodes[e.src].paragraph_id, graph.nodes[e.dst].paragraph_id}
        if len(ends & chain_paragraphs) == 1 and len(ends) == 2:
            problems.append(f"edge {e} leaves the gold chain")
            break
    if prepared.gold_span is None or prepared.gold_span[0] != p3:
        problems.append("answer span not found in the answer paragraph")
    return problems


def write_task(out_dir: str | Path, world: SyntheticWorld, examples: Sequence[Example], spec: SyntheticTaskSpec, name: str = "corpus") -> dict[str, Path]:
    """Write entities.jsonl, triples.tsv, <name>.jsonl and the generator settings."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"entities": out / "entities.jsonl", "triples": out / "triples.tsv", "corpus": out / f"{name}.jsonl"}
    world.store.save(paths["entities"], paths["triples"])
    write_corpus(paths["corpus"], examples)
    paths["spec"] = out / f"{name}.spec.json"
    paths["spec"].write_text(json.dumps(spec.to_dict(), sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return paths


def chance_em(example: Example) -> float:
    """Answer EM of guessing uniformly among the candidate posts in the paragraph set."""
    return 1.0 / max(int(example.meta.get("candidates", 1)), 1)
