"""Small record types for verification results."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import BoundViolation


@dataclass
class Check:
    """One measured quantity compared against a bound.

    ``relation`` is ``">="`` or ``"<="`` (or ``"bool"`` for pass/fail
    checks whose value is 1 on success).  The verdict is recomputable from
    ``value``, ``bound`` and ``relation`` alone.
    """

    name: str
    value: float
    bound: float
    relation: str
    witness: Optional[list] = None

    @property
    def ok(self) -> bool:
        if self.relation == ">=":
            return self.value >= self.bound
        if self.relation == "<=":
            return self.value <= self.bound
        if self.relation == ">":
            return self.value > self.bound
        if self.relation == "<":
            return self.value < self.bound
        if self.relation == "bool":
            return bool(self.value)
        raise ValueError(self.relation)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "value": float(self.value),
            "bound": float(self.bound),
            "relation": self.relation,
            "ok": self.ok,
            "witness": self.witness,
        }


@dataclass
class Diagnostics:
    checks: list = field(default_factory=list)
    measured: dict = field(default_factory=dict)

    def add(self, name, value, bound, relation, witness=None) -> Check:
        c = Check(name, float(value), float(bound), relation, None if witness is None else [float(w) for w in witness])
        self.checks.append(c)
        return c

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.ok]

    def raise_on_violation(self) -> "Diagnostics":
        bad = self.failures()
        if bad:
            c = bad[0]
            raise BoundViolation(f"{c.name}: {c.value:.6g} vs bound {c.bound:.6g}", c.witness, c.value, c.bound)
        return self

    def as_dict(self) -> dict[str, Any]:
        return {"ok": self.ok, "checks": [c.as_dict() for c in self.checks], "measured": dict(self.measured)}
