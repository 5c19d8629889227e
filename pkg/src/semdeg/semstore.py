"""Structural knowledge base: terms, glossary, thesaurus, taxonomy, triples.

The store is mutable and not internally locked.  Writers must be
exclusive; readers that need isolation take a :meth:`KnowledgeBase.snapshot`.
"""

from __future__ import annotations

import copy
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Optional


class KnowledgeError(Exception):
    pass


class DuplicateTerm(KnowledgeError):
    pass


class UnknownTerm(KnowledgeError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class NoDescription(KnowledgeError):
    pass


class CycleDetected(KnowledgeError):
    pass


@dataclass(frozen=True)
class Term:
    id: str
    label: str


class OntologyTriple(NamedTuple):
    subject: str
    relation: str
    object: str


@dataclass
class KnowledgeBase:
    terms: dict[str, Term] = field(default_factory=dict)
    glossary: dict[str, str] = field(default_factory=dict)
    synonyms: dict[str, str] = field(default_factory=dict)
    # child -> set of parents
    taxonomy: dict[str, set[str]] = field(default_factory=lambda: defaultdict(set))
    triples: set[OntologyTriple] = field(default_factory=set)

    # -- terminology ---------------------------------------------------------

    def define_term(self, id: str, label: Optional[str] = None) -> KnowledgeBase:
        _check_token(id)
        if id in self.terms:
            raise DuplicateTerm(id)
        self.terms[id] = Term(id, label if label is not None else id)
        return self

    def ensure_term(self, id: str, label: Optional[str] = None) -> KnowledgeBase:
        if id not in self.terms:
            self.define_term(id, label)
        return self

    def has_term(self, id: str) -> bool:
        return id in self.terms

    def list_terms(self) -> list[str]:
        return sorted(self.terms)

    def _require(self, *ids: str) -> None:
        for i in ids:
            if i not in self.terms:
                raise UnknownTerm(f"unknown term {i!r}")

    # -- glossary ------------------------------------------------------------

    def set_description(self, term: str, description: str) -> KnowledgeBase:
        self._require(term)
        self.glossary[term] = description
        return self

    def describe(self, term: str) -> str:
        self._require(term)
        try:
            return self.glossary[term]
        except KeyError:
            raise NoDescription(f"no description for {term!r}") from None

    # -- thesaurus -----------------------------------------------------------

    def add_synonym(self, alias: str, canonical: str) -> KnowledgeBase:
        """Map ``alias`` onto ``canonical``; alias chains are flattened."""
        self._require(alias, canonical)
        target = self.canonicalize(canonical)
        if target == alias:
            raise CycleDetected(f"synonym {alias!r} -> {canonical!r} would loop")
        if alias in self.synonyms and self.synonyms[alias] != target:
            raise KnowledgeError(
                f"{alias!r} is already an alias of {self.synonyms[alias]!r}")
        self.synonyms[alias] = target
        for other, canon in self.synonyms.items():
            if canon == alias:
                self.synonyms[other] = target
        return self

    def canonicalize(self, term: str) -> str:
        self._require(term)
        return self.synonyms.get(term, term)

    def aliases(self, canonical: str) -> list[str]:
        return sorted(a for a, c in self.synonyms.items() if c == canonical)

    # -- taxonomy ------------------------------------------------------------

    def add_taxonomy_edge(self, child: str, parent: str) -> KnowledgeBase:
        self._require(child, parent)
        if child == parent or self.is_subtype(parent, child):
            raise CycleDetected(f"is-a edge {child!r} -> {parent!r} closes a cycle")
        self.taxonomy[child].add(parent)
        return self

    def parents(self, term: str) -> list[str]:
        self._require(term)
        return sorted(self.taxonomy.get(term, ()))

    def ancestors(self, term: str) -> set[str]:
        """Reflexive-transitive ancestors of ``term``."""
        self._require(term)
        seen = {term}
        todo = deque([term])
        while todo:
            t = todo.popleft()
            for p in self.taxonomy.get(t, ()):
                if p not in seen:
                    seen.add(p)
                    todo.append(p)
        return seen

    def is_subtype(self, child: str, ancestor: str) -> bool:
        self._require(child, ancestor)
        return ancestor in self.ancestors(child)

    def taxonomy_edges(self) -> list[tuple[str, str]]:
        return sorted((c, p) for c, ps in self.taxonomy.items() for p in ps)

    # -- ontology ------------------------------------------------------------

    def add_triple(self, subject: str, relation: str, object: str) -> KnowledgeBase:
        self._require(subject, relation, object)
        self.triples.add(OntologyTriple(subject, relation, object))
        return self

    def query_triples(self, subject: Optional[str] = None, relation: Optional[str] = None,
                      object: Optional[str] = None) -> list[OntologyTriple]:
        return sorted(
            t for t in self.triples
            if (subject is None or t.subject == subject)
            and (relation is None or t.relation == relation)
            and (object is None or t.object == object)
        )

    def transitive_closure(self, relation: str) -> set[tuple[str, str]]:
        self._require(relation)
        edges = [(t.subject, t.object) for t in self.triples if t.relation == relation]
        return transitive_closure(edges)

    # -- housekeeping --------------------------------------------------------

    def snapshot(self) -> KnowledgeBase:
        return copy.deepcopy(self)

    def check_integrity(self) -> list[str]:
        """Full scan; returns a list of problems (empty when consistent)."""
        problems = []
        ids = self.terms.keys()
        for t in self.glossary:
            if t not in ids:
                problems.append(f"glossary entry for unknown term {t!r}")
        for a, c in self.synonyms.items():
            if a not in ids or c not in ids:
                problems.append(f"synonym {a!r}->{c!r} references unknown term")
            if c in self.synonyms:
                problems.append(f"synonym chain through {c!r}")
        for c, ps in self.taxonomy.items():
            for p in ps:
                if c not in ids or p not in ids:
                    problems.append(f"is-a edge {c!r}->{p!r} references unknown term")
        for tr in self.triples:
            for part in tr:
                if part not in ids:
                    problems.append(f"triple {tuple(tr)} references unknown term {part!r}")
        if _has_cycle(self.taxonomy):
            problems.append("taxonomy contains a cycle")
        return problems


def transitive_closure(edges: Iterable[tuple[str, str]]) -> set[tuple[str, str]]:
    """Non-reflexive transitive closure: pairs (a, b), a != b, b reachable from a."""
    succ: dict[str, set[str]] = defaultdict(set)
    for a, b in edges:
        succ[a].add(b)
    closure = set()
    for start in list(succ):
        seen = set()
        todo = deque(succ[start])
        while todo:
            n = todo.popleft()
            if n in seen:
                continue
            seen.add(n)
            todo.extend(succ.get(n, ()))
        closure.update((start, n) for n in seen if n != start)
    return closure


def _has_cycle(graph: dict[str, set[str]]) -> bool:
    white, grey, black = 0, 1, 2
    color: dict[str, int] = defaultdict(int)
    for root in list(graph):
        if color[root] != white:
            continue
        stack = [(root, iter(graph.get(root, ())))]
        color[root] = grey
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = black
                stack.pop()
            elif color[nxt] == grey:
                return True
            elif color[nxt] == white:
                color[nxt] = grey
                stack.append((nxt, iter(graph.get(nxt, ()))))
    return False


def _check_token(value: str) -> None:
    if not value or any(c in value for c in "\t\r\n"):
        raise ValueError(f"invalid term id {value!r}")


# ---------------------------------------------------------------------------
# Line-oriented text format


def _records(text: str) -> Iterator[tuple[int, list[str]]]:
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        yield lineno, raw.split("\t")


_ARITY = {"TERM": (2, 3), "GLOS": (3, 3), "SYN": (3, 3), "TAX": (3, 3), "TRIPLE": (4, 4)}


def loads(text: str, kb: Optional[KnowledgeBase] = None) -> KnowledgeBase:
    """Parse ``TERM``/``GLOS``/``SYN``/``TAX``/``TRIPLE`` records into a knowledge base.

    Records are applied in file order, so terms must be defined before use.
    Unknown record kinds are rejected.
    """
    kb = kb if kb is not None else KnowledgeBase()
    for lineno, cols in _records(text):
        kind = cols[0]
        if kind not in _ARITY:
            raise ValueError(f"line {lineno}: unknown record kind {kind!r}")
        lo, hi = _ARITY[kind]
        if not lo <= len(cols) <= hi:
            raise ValueError(f"line {lineno}: {kind} takes {lo - 1}..{hi - 1} fields")
        try:
            if kind == "TERM":
                kb.define_term(cols[1], cols[2] if len(cols) > 2 and cols[2] else None)
            elif kind == "GLOS":
                kb.set_description(cols[1], cols[2])
            elif kind == "SYN":
                kb.add_synonym(cols[1], cols[2])
            elif kind == "TAX":
                kb.add_taxonomy_edge(cols[1], cols[2])
            else:
                kb.add_triple(cols[1], cols[2], cols[3])
        except KnowledgeError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return kb


def dumps(kb: KnowledgeBase) -> str:
    out = []
    for tid in kb.list_terms():
        out.append(f"TERM\t{tid}\t{kb.terms[tid].label}")
    for tid in sorted(kb.glossary):
        out.append(f"GLOS\t{tid}\t{kb.glossary[tid]}")
    for alias in sorted(kb.synonyms):
        out.append(f"SYN\t{alias}\t{kb.synonyms[alias]}")
    for child, parent in kb.taxonomy_edges():
        out.append(f"TAX\t{child}\t{parent}")
    for s, r, o in sorted(kb.triples):
        out.append(f"TRIPLE\t{s}\t{r}\t{o}")
    return "\n".join(out) + "\n"


def load(path) -> KnowledgeBase:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def save(kb: KnowledgeBase, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(kb))
