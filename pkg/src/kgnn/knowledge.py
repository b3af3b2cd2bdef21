"""Entity records, relation facts, gazetteer linking and pairwise relation queries."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .text import TokenizedText, tokenize

log = logging.getLogger(__name__)

COREF = "coref"
DEFAULT_RELATIONS = ("director", "position_held", "record_label", "lyrics_by", "adapted_from")
FORWARD, BACKWARD = "forward", "backward"


class KnowledgeStoreError(ValueError):
    pass


@dataclass(frozen=True)
class EntityRecord:
    entity_id: str
    canonical_name: str
    aliases: tuple[str, ...] = ()

    def __post_init__(self):
        if self.canonical_name not in self.aliases:
            object.__setattr__(self, "aliases", (self.canonical_name,) + tuple(self.aliases))


@dataclass(frozen=True, order=True)
class RelationTriple:
    head: str
    relation: str
    tail: str


@dataclass(frozen=True)
class Mention:
    paragraph_id: int
    start: int
    end: int
    entity_id: str

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class RelationVocabulary:
    """Relation names with the co-reference type pinned at index 0."""

    relations: tuple[str, ...] = DEFAULT_RELATIONS
    names: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        rels = tuple(r for r in self.relations if r != COREF)
        if len(set(rels)) != len(rels):
            raise ValueError(f"duplicate relation names in {rels}")
        object.__setattr__(self, "relations", rels)
        object.__setattr__(self, "names", (COREF,) + rels)

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def kinds(self, inverse_edges: bool = True) -> list[tuple[str, str]]:
        """Edge kinds in adjacency order: coref, forward relations, then backward ones."""
        kinds = [(COREF, FORWARD)] + [(r, FORWARD) for r in self.relations]
        if inverse_edges:
            kinds += [(r, BACKWARD) for r in self.relations]
        return kinds


class KnowledgeStore:
    def __init__(
        self,
        entities: Iterable[EntityRecord],
        triples: Iterable[RelationTriple] = (),
        vocabulary: RelationVocabulary | None = None,
    ):
        self.vocabulary = vocabulary or RelationVocabulary()
        self.entities: dict[str, EntityRecord] = {}
        for ent in entities:
            if ent.entity_id in self.entities:
                raise KnowledgeStoreError(f"duplicate entity id {ent.entity_id!r}")
            self.entities[ent.entity_id] = ent
        self._aliases: dict[tuple[str, ...], str] = {}
        for ent in self.entities.values():
            for alias in ent.aliases:
                key = tuple(t.lower() for t in tokenize(alias).tokens)
                if not key:
                    continue
                owner = self._aliases.setdefault(key, ent.entity_id)
                if owner != ent.entity_id:
                    log.warning("alias %r shared by %s and %s; keeping %s", alias, owner, ent.entity_id, owner)
        self.max_alias_len = max((len(k) for k in self._aliases), default=0)
        self.triples: list[RelationTriple] = []
        self._pair_index: dict[tuple[str, str], list[str]] = {}
        for t in triples:
            self.add_triple(t)

    def add_triple(self, triple: RelationTriple) -> bool:
        for ent in (triple.head, triple.tail):
            if ent not in self.entities:
                raise KnowledgeStoreError(f"triple {triple} references unknown entity {ent!r}")
        if triple.relation not in self.vocabulary.relations:
            raise KnowledgeStoreError(f"triple {triple} uses unknown relation {triple.relation!r}")
        if triple.head == triple.tail:
            raise KnowledgeStoreError(f"triple {triple} relates an entity to itself")
        rels = self._pair_index.setdefault((triple.head, triple.tail), [])
        if triple.relation in rels:
            return False
        rels.append(triple.relation)
        self.triples.append(triple)
        return True

    def __len__(self) -> int:
        return len(self.entities)

    def query_relations(self, e1: str, e2: str) -> list[tuple[str, str]]:
        """Relations between two entities: (r, forward) for e1-r->e2, (r, backward) for e2-r->e1."""
        for ent in (e1, e2):
            if ent not in self.entities:
                raise KnowledgeStoreError(f"unknown entity id {ent!r}")
        order = self.vocabulary.index
        fwd = sorted(self._pair_index.get((e1, e2), ()), key=order)
        bwd = sorted(self._pair_index.get((e2, e1), ()), key=order)
        return [(r, FORWARD) for r in fwd] + [(r, BACKWARD) for r in bwd]

    def link_mentions(self, paragraph: TokenizedText, paragraph_id: int = 0) -> list[Mention]:
        """Greedy left-to-right longest alias match, case-insensitive, non-overlapping."""
        lowered = [t.lower() for t in paragraph.tokens]
        mentions = []
        i = 0
        while i < len(lowered):
            for length in range(min(self.max_alias_len, len(lowered) - i), 0, -1):
                ent = self._aliases.get(tuple(lowered[i : i + length]))
                if ent is not None:
                    mentions.append(Mention(paragraph_id, i, i + length - 1, ent))
                    i += length
                    break
            else:
                i += 1
        return mentions

    def save(self, entities_path: str | Path, triples_path: str | Path) -> None:
        with open(entities_path, "w", encoding="utf-8") as f:
            for ent in self.entities.values():
                row = {"id": ent.entity_id, "name": ent.canonical_name, "aliases": list(ent.aliases)}
                f.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
        with open(triples_path, "w", encoding="utf-8") as f:
            f.write("# head\trelation\ttail\n")
            for t in self.triples:
                f.write(f"{t.head}\t{t.relation}\t{t.tail}\n")


def link_mentions(paragraph: TokenizedText, store: KnowledgeStore, paragraph_id: int = 0) -> list[Mention]:
    return store.link_mentions(paragraph, paragraph_id)


def query_relations(e1: str, e2: str, store: KnowledgeStore) -> list[tuple[str, str]]:
    return store.query_relations(e1, e2)


def load_store(
    entities_path: str | Path,
    triples_path: str | Path,
    vocabulary: RelationVocabulary | None = None,
) -> KnowledgeStore:
    entities = []
    with open(entities_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                entities.append(EntityRecord(row["id"], row["name"], tuple(row.get("aliases", ()))))
            except (json.JSONDecodeError, KeyError) as exc:
                raise KnowledgeStoreError(f"{entities_path}:{lineno}: bad entity record ({exc})") from None
    store = KnowledgeStore(entities, (), vocabulary)
    with open(triples_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise KnowledgeStoreError(f"{triples_path}:{lineno}: expected head<TAB>relation<TAB>tail")
            try:
                store.add_triple(RelationTriple(*(p.strip() for p in parts)))
            except KnowledgeStoreError as exc:
                raise KnowledgeStoreError(f"{triples_path}:{lineno}: {exc}") from None
    return store
