"""Line protocol of the I4.0 service.

One message per line: ``VERB key=value key=value``.  Values containing
spaces, quotes, backslashes or ``=`` are double-quoted with backslash
escapes.  Protocol version 1.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from typing import Iterable

from semdeg.semstore import OntologyTriple

PROTOCOL_VERSION = 1

VERBS = frozenset({
    "REGISTER_MAPPING", "QUERY_EXPECTED", "REQUEST_CONVERTER",
    "OK", "EXPECTED", "CHAIN", "ERR",
})


class MessageError(ValueError):
    pass


@dataclass(frozen=True)
class ServiceMessage:
    verb: str
    fields: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.verb not in VERBS:
            raise MessageError(f"unknown verb {self.verb!r}")

    def __getitem__(self, key: str) -> str:
        try:
            return self.fields[key]
        except KeyError:
            raise MessageError(f"{self.verb} lacks field {key!r}") from None

    def get(self, key: str, default=None):
        return self.fields.get(key, default)


def _quote(value: str) -> str:
    if value and not any(c in value for c in ' \t"\\=\'\n'):
        return value
    escaped = value.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


def encode(msg: ServiceMessage) -> str:
    parts = [msg.verb] + [f"{k}={_quote(str(v))}" for k, v in msg.fields.items()]
    return " ".join(parts) + "\n"


def decode(line: str) -> ServiceMessage:
    line = line.rstrip("\r\n")
    if "\n" in line:
        raise MessageError("embedded newline")
    try:
        tokens = shlex.split(line, posix=True)
    except ValueError as exc:
        raise MessageError(str(exc)) from None
    if not tokens:
        raise MessageError("empty message")
    verb, *rest = tokens
    fields: dict[str, str] = {}
    for tok in rest:
        key, sep, value = tok.partition("=")
        if not sep or not key:
            raise MessageError(f"expected key=value, got {tok!r}")
        if key in fields:
            raise MessageError(f"duplicate key {key!r}")
        fields[key] = value
    return ServiceMessage(verb, fields)


def msg(verb: str, **fields) -> ServiceMessage:
    return ServiceMessage(verb, {k: str(v) for k, v in fields.items()})


# Triples travel as "s|r|o;s|r|o".  Term ids never contain '|' or ';'.

def pack_triples(triples: Iterable[OntologyTriple]) -> str:
    out = []
    for t in triples:
        for part in t:
            if "|" in part or ";" in part:
                raise MessageError(f"term {part!r} cannot be packed")
        out.append("|".join(t))
    return ";".join(out)


def unpack_triples(text: str) -> list[OntologyTriple]:
    if not text:
        return []
    triples = []
    for chunk in text.split(";"):
        parts = chunk.split("|")
        if len(parts) != 3:
            raise MessageError(f"bad triple {chunk!r}")
        triples.append(OntologyTriple(*parts))
    return triples
