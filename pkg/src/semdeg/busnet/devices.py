"""Device descriptors, slave lifecycle and the acceptance decision."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from semdeg.semstore import KnowledgeBase
from semdeg.units import ConverterChain, ConverterRegistry, NoConverterPath


class Lifecycle(enum.Enum):
    UNVALIDATED = "Unvalidated"
    ACCEPTED = "Accepted"
    CONDITIONALLY_ACCEPTED = "ConditionallyAccepted"
    REJECTED = "Rejected"

    def __str__(self) -> str:
        return self.value

    @property
    def serves_data(self) -> bool:
        return self in (Lifecycle.ACCEPTED, Lifecycle.CONDITIONALLY_ACCEPTED)


@dataclass(frozen=True)
class DeviceDescriptor:
    unit_id: int
    device_type: str
    native_unit: str
    register_base: int = 0

    def __post_init__(self) -> None:
        if not 1 <= self.unit_id <= 247:
            raise ValueError(f"unit id {self.unit_id} outside 1..247")
        if not 0 <= self.register_base <= 0xFFFE:
            raise ValueError("register base out of range")


@dataclass(frozen=True)
class SlaveState:
    lifecycle: Lifecycle = Lifecycle.UNVALIDATED
    active_chain: Optional[ConverterChain] = None
    reason: str = ""

    def __post_init__(self) -> None:
        conditional = self.lifecycle is Lifecycle.CONDITIONALLY_ACCEPTED
        if conditional != (self.active_chain is not None and len(self.active_chain) > 0):
            raise ValueError("a non-empty active chain exists exactly in conditional acceptance")

    def __str__(self) -> str:
        if self.lifecycle is Lifecycle.CONDITIONALLY_ACCEPTED:
            return f"{self.lifecycle} {self.active_chain}"
        if self.reason:
            return f"{self.lifecycle} ({self.reason})"
        return str(self.lifecycle)


def judge(type_matches: bool, expected_unit: str, native_unit: str,
          chain: Optional[ConverterChain]) -> SlaveState:
    """Lifecycle from the facts a slave has gathered.

    ``chain`` is the native->expected chain the service delivered, or None
    when none exists.
    """
    if not type_matches:
        return SlaveState(Lifecycle.REJECTED, reason="device type mismatch")
    if native_unit == expected_unit:
        return SlaveState(Lifecycle.ACCEPTED)
    if chain is None:
        return SlaveState(Lifecycle.REJECTED,
                          reason=f"no converter {native_unit} -> {expected_unit}")
    return SlaveState(Lifecycle.CONDITIONALLY_ACCEPTED, chain)


def type_matches(kb: KnowledgeBase, actual: str, expected: str, subtyping: bool = True) -> bool:
    if actual == expected:
        return True
    if not (kb.has_term(actual) and kb.has_term(expected)):
        return False
    # Vendor or instance ids resolve through the thesaurus first.
    actual, expected = kb.canonicalize(actual), kb.canonicalize(expected)
    if actual == expected:
        return True
    return subtyping and kb.is_subtype(actual, expected)


def decide(expected: DeviceDescriptor, actual_type: str, native_unit: str,
           kb: KnowledgeBase, registry: ConverterRegistry, subtyping: bool = True) -> SlaveState:
    """Reference acceptance decision computed locally from the raw inputs."""
    matches = type_matches(kb, actual_type, expected.device_type, subtyping)
    chain = None
    if matches and native_unit != expected.native_unit:
        try:
            chain = registry.find_chain(native_unit, expected.native_unit)
        except NoConverterPath:
            chain = None
    return judge(matches, expected.native_unit, native_unit, chain)
