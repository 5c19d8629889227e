"""Semantic-degree lattice, degree-selection rules and the technology catalog.

A degree is a pair (structural, behavioral).  Pairs are ordered
componentwise; ``join`` is the componentwise maximum.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Optional, Union


class StructuralDegree(enum.IntEnum):
    S0 = 0
    S1 = 1
    S2 = 2
    S3 = 3
    S4 = 4
    S5 = 5

    @property
    def title(self) -> str:
        return _S_TITLES[self]

    def __str__(self) -> str:
        return f"{self.name} {self.title}"


class BehavioralDegree(enum.IntEnum):
    B0 = 0
    B1 = 1
    B2 = 2
    B3 = 3
    B4 = 4
    B5 = 5
    B6 = 6

    @property
    def title(self) -> str:
        return _B_TITLES[self]

    def __str__(self) -> str:
        return f"{self.name} {self.title}"


_S_TITLES = {
    StructuralDegree.S0: "Repository",
    StructuralDegree.S1: "Terminology",
    StructuralDegree.S2: "Glossary",
    StructuralDegree.S3: "Thesaurus",
    StructuralDegree.S4: "Taxonomy",
    StructuralDegree.S5: "Ontology",
}

_B_TITLES = {
    BehavioralDegree.B0: "Data",
    BehavioralDegree.B1: "Information",
    BehavioralDegree.B2: "Constraints",
    BehavioralDegree.B3: "Finite automata",
    BehavioralDegree.B4: "Petri nets",
    BehavioralDegree.B5: "Programming language",
    BehavioralDegree.B6: "Integrated simulation model",
}


def structural(token: str) -> StructuralDegree:
    """Parse ``"S3"`` (case-insensitive) into a structural degree."""
    try:
        return StructuralDegree[token.strip().upper()]
    except KeyError:
        raise ValueError(f"not a structural degree: {token!r}") from None


def behavioral(token: str) -> BehavioralDegree:
    try:
        return BehavioralDegree[token.strip().upper()]
    except KeyError:
        raise ValueError(f"not a behavioral degree: {token!r}") from None


@dataclass(frozen=True)
class DegreePair:
    structural: StructuralDegree
    behavioral: BehavioralDegree

    # Partial order only: __lt__/__gt__ are deliberately not defined, so
    # sorting pairs is an error rather than a silent total order.
    def __le__(self, other: DegreePair) -> bool:
        if not isinstance(other, DegreePair):
            return NotImplemented
        return self.structural <= other.structural and self.behavioral <= other.behavioral

    def __ge__(self, other: DegreePair) -> bool:
        if not isinstance(other, DegreePair):
            return NotImplemented
        return other <= self

    def join(self, other: DegreePair) -> DegreePair:
        return join(self, other)

    @classmethod
    def parse(cls, text: str) -> DegreePair:
        """Accepts ``"S5/B2"``, ``"S5 B2"`` or ``"(S5,B2)"``."""
        cleaned = text.strip().strip("()")
        for sep in ("/", ",", " "):
            cleaned = cleaned.replace(sep, " ")
        parts = cleaned.split()
        if len(parts) != 2:
            raise ValueError(f"not a degree pair: {text!r}")
        return cls(structural(parts[0]), behavioral(parts[1]))

    @property
    def short(self) -> str:
        return f"{self.structural.name}/{self.behavioral.name}"

    def __str__(self) -> str:
        return f"{self.structural} / {self.behavioral}"


BOTTOM = DegreePair(StructuralDegree.S0, BehavioralDegree.B0)
TOP = DegreePair(StructuralDegree.S5, BehavioralDegree.B6)


def join(a: DegreePair, b: DegreePair) -> DegreePair:
    return DegreePair(max(a.structural, b.structural), max(a.behavioral, b.behavioral))


def join_all(pairs: Iterable[DegreePair]) -> DegreePair:
    result = BOTTOM
    for p in pairs:
        result = join(result, p)
    return result


def all_pairs() -> list[DegreePair]:
    return [DegreePair(s, b) for s in StructuralDegree for b in BehavioralDegree]


# ---------------------------------------------------------------------------
# Selection rules


@dataclass(frozen=True)
class Rule:
    id: str
    question: str
    minimum: DegreePair
    argument: str
    note: Optional[str] = None
    # Highest behavioral degree a positive answer may call for.
    behavioral_ceiling: Optional[BehavioralDegree] = None


def _p(s: int, b: int) -> DegreePair:
    return DegreePair(StructuralDegree(s), BehavioralDegree(b))


RULES: tuple[Rule, ...] = (
    Rule("R0", "Is the scope of the system very limited? E.g. one vendor, only few "
         "entities, static setup", _p(0, 0),
         "Hard coding with less effort than modelling"),
    Rule("R1", "Have multiple parties the need to exchange standardized knowledge "
         "which can be intuitively understood (such as units)?", _p(1, 1),
         "Necessity of well defined terms"),
    Rule("R2", "Have multiple parties the need to coordinate the use of terms?", _p(2, 1),
         "Human readable description needed for a common understanding"),
    Rule("R3", "Is it necessary to integrate definition of terms of other parties?", _p(3, 1),
         "Mapping of different definitions using a thesaurus"),
    Rule("R4", "Should the system provide a basic type system and be extensible in "
         "terms of lately added types?", _p(4, 1),
         "Parent-child relations needed to classify types"),
    Rule("R5", "Should the system be dynamic and extensible, e.g. allow for modelling "
         "of artificial elements during runtime?", _p(5, 1),
         "Even the meaning of a relationship can be modelled"),
    Rule("R6", "Is it required to validate evolving configurations during runtime?", _p(1, 2),
         "Modelling of requirements and a controlled vocabulary needed"),
    Rule("R7", "Shall reasoning be supported?", _p(5, 2),
         "Necessity to describe complex and evaluable relationships"),
    Rule("R8", "Is it necessary to understand/modify the functionality (e.g. logic) "
         "of another system?", _p(1, 3),
         "Machine interpretable description of logic required",
         note="B3 Automata (up to B5)",
         behavioral_ceiling=BehavioralDegree.B5),
)

RULE_IDS: tuple[str, ...] = tuple(r.id for r in RULES)
_RULES_BY_ID = {r.id: r for r in RULES}


def rule(rule_id: str) -> Rule:
    try:
        return _RULES_BY_ID[rule_id.strip().upper()]
    except KeyError:
        raise KeyError(f"unknown rule {rule_id!r}") from None


@dataclass(frozen=True)
class Advice:
    result: DegreePair
    triggered: tuple[str, ...]
    notes: tuple[str, ...] = ()


Answer = Union[bool, BehavioralDegree]


def advise(answers: Mapping[str, Answer]) -> Advice:
    """Minimal degree satisfying every positively answered rule.

    An answer is ``True``/``False``, or, for a ranged rule (R8), the
    behavioral degree actually needed within the rule's range; that counts
    as a yes at the given level.
    """
    normalized: dict[str, Answer] = {}
    for key, value in answers.items():
        normalized[rule(key).id] = value

    result = BOTTOM
    triggered: list[str] = []
    notes: list[str] = []
    for r in RULES:
        if r.id not in normalized:
            notes.append(f"{r.id} not answered; treated as no")
            continue
        answer = normalized[r.id]
        if answer is False:
            continue
        minimum = r.minimum
        if isinstance(answer, BehavioralDegree) and not isinstance(answer, bool):
            ceiling = r.behavioral_ceiling or r.minimum.behavioral
            if not r.minimum.behavioral <= answer <= ceiling:
                raise ValueError(
                    f"{r.id}: level {answer.name} outside "
                    f"{r.minimum.behavioral.name}..{ceiling.name}"
                )
            minimum = DegreePair(r.minimum.structural, answer)
        elif answer is not True:
            raise TypeError(f"{r.id}: answer must be bool or BehavioralDegree, got {answer!r}")
        triggered.append(r.id)
        result = join(result, minimum)
        if r.behavioral_ceiling is not None:
            notes.append(
                f"{r.id}: behavioral requirement ranges from "
                f"{r.minimum.behavioral.name} up to {r.behavioral_ceiling.name}"
            )
    return Advice(result, tuple(triggered), tuple(notes))


# ---------------------------------------------------------------------------
# Technology catalog


class NotFound(LookupError):
    pass


@dataclass(frozen=True)
class TechnologyEntry:
    name: str
    variant: Optional[str]
    degrees: DegreePair
    note: Optional[str] = None

    @property
    def label(self) -> str:
        return f"{self.name} / {self.variant}" if self.variant else self.name

    def sort_key(self) -> tuple[str, str]:
        return (self.name.casefold(), (self.variant or "").casefold())


@dataclass
class Catalog:
    entries: list[TechnologyEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen = set()
        for e in self.entries:
            key = (e.name.casefold(), e.variant)
            if key in seen:
                raise ValueError(f"duplicate catalog entry {e.label!r}")
            seen.add(key)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def parse_catalog(text: str) -> Catalog:
    """Read the tab-separated catalog: name, variant, structural, behavioral, note."""
    entries = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) < 4:
            raise ValueError(f"catalog line {lineno}: expected at least 4 columns")
        cols += [""] * (5 - len(cols))
        name, variant, s, b, note = (c.strip() for c in cols[:5])
        try:
            pair = DegreePair(structural(s), behavioral(b))
        except ValueError as exc:
            raise ValueError(f"catalog line {lineno}: {exc}") from None
        entries.append(TechnologyEntry(name, variant or None, pair, note or None))
    return Catalog(entries)


def format_catalog(catalog: Iterable[TechnologyEntry]) -> str:
    lines = ["# name\tvariant\tstructural\tbehavioral\tnote"]
    for e in catalog:
        lines.append("\t".join([e.name, e.variant or "", e.degrees.structural.name,
                                e.degrees.behavioral.name, e.note or ""]))
    return "\n".join(lines) + "\n"


def load_catalog(path=None) -> Catalog:
    """Load a catalog file, or the bundled automation-technology table."""
    if path is None:
        text = resources.files("semdeg.data").joinpath("technologies.tsv").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return parse_catalog(text)


def lookup_technology(catalog: Iterable[TechnologyEntry], name: str,
                      variant: Optional[str] = None) -> TechnologyEntry:
    wanted = name.strip().casefold()
    candidates = [e for e in catalog if e.name.casefold() == wanted]
    for e in candidates:
        if e.variant == variant:
            return e
    if candidates and variant is None:
        variants = ", ".join(sorted(e.variant or "-" for e in candidates))
        raise NotFound(f"{name!r} requires a variant (one of: {variants})")
    raise NotFound(f"no technology {name!r}" + (f" variant {variant!r}" if variant else ""))


def filter_technologies(catalog: Iterable[TechnologyEntry],
                        requirement: DegreePair) -> list[TechnologyEntry]:
    return sorted((e for e in catalog if requirement <= e.degrees),
                  key=TechnologyEntry.sort_key)
