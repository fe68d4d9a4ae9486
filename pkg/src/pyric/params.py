"""Learnable coefficients of the ignition-component chain and their ledger file.

The ledger is a JSON document::

    {"format": "pyric-ledger/1",
     "parameters": {"qign.c0": {"value": 144.5, "frozen": false,
                                "exponent": false, "description": "...",
                                "source": "..."}, ...}}

Values are written with ``repr`` precision so a save/load round trip is
bit-exact.  Parameters flagged ``exponent`` are always frozen.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

LEDGER_FORMAT = "pyric-ledger/1"
ALPHA_PREFIX = "log_alpha."


@dataclass(frozen=True)
class Parameter:
    value: float
    frozen: bool = False
    exponent: bool = False
    description: str = ""
    source: str = ""

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("parameter values must be finite")
        if self.exponent and not self.frozen:
            object.__setattr__(self, "frozen", True)


class ParameterSet:
    """Ordered, immutable mapping of parameter name to :class:`Parameter`."""

    def __init__(self, entries: Mapping[str, Parameter]):
        self._entries = dict(entries)

    # construction -----------------------------------------------------------
    @classmethod
    def default(cls) -> "ParameterSet":
        text = resources.files("pyric").joinpath("default_ledger.json").read_text()
        return cls.from_json(text)

    @classmethod
    def from_json(cls, text: str) -> "ParameterSet":
        doc = json.loads(text)
        if doc.get("format") != LEDGER_FORMAT:
            raise ValueError(f"not a parameter ledger (format={doc.get('format')!r})")
        entries = {}
        for name, e in doc["parameters"].items():
            entries[name] = Parameter(
                value=float(e["value"]),
                frozen=bool(e.get("frozen", False)),
                exponent=bool(e.get("exponent", False)),
                description=e.get("description", ""),
                source=e.get("source", ""),
            )
        return cls(entries)

    @classmethod
    def load(cls, path: str | Path) -> "ParameterSet":
        return cls.from_json(Path(path).read_text())

    def to_dict(self) -> dict:
        return {
            "format": LEDGER_FORMAT,
            "parameters": {
                name: {
                    "value": p.value,
                    "frozen": p.frozen,
                    "exponent": p.exponent,
                    "description": p.description,
                    "source": p.source,
                }
                for name, p in self._entries.items()
            },
        }

    def to_json(self) -> str:
        # json writes floats with repr(), the shortest round-tripping form
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    # access -----------------------------------------------------------------
    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __getitem__(self, name: str) -> float:
        return self._entries[name].value

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def __eq__(self, other):
        return isinstance(other, ParameterSet) and self._entries == other._entries

    def entry(self, name: str) -> Parameter:
        return self._entries[name]

    @property
    def names(self) -> list[str]:
        return list(self._entries)

    def values(self) -> dict[str, float]:
        return {n: p.value for n, p in self._entries.items()}

    @property
    def freeze_mask(self) -> dict[str, bool]:
        return {n: p.frozen for n, p in self._entries.items()}

    def learnable(self) -> list[str]:
        return [n for n, p in self._entries.items() if not p.frozen]

    def alpha(self, site: str) -> float:
        return math.exp(self[ALPHA_PREFIX + site])

    def branch_sites(self) -> list[str]:
        return [n[len(ALPHA_PREFIX):] for n in self._entries if n.startswith(ALPHA_PREFIX)]

    # derivation -------------------------------------------------------------
    def with_values(self, updates: Mapping[str, float]) -> "ParameterSet":
        entries = dict(self._entries)
        for name, v in updates.items():
            if name not in entries:
                raise KeyError(name)
            entries[name] = replace(entries[name], value=float(v))
        return ParameterSet(entries)

    def with_alpha(self, site: str, alpha: float) -> "ParameterSet":
        return self.with_values({ALPHA_PREFIX + site: math.log(alpha)})

    def with_all_alphas(self, alpha: float) -> "ParameterSet":
        return self.with_values({ALPHA_PREFIX + s: math.log(alpha) for s in self.branch_sites()})

    def freeze(self, names: Iterable[str]) -> "ParameterSet":
        entries = dict(self._entries)
        for n in names:
            entries[n] = replace(entries[n], frozen=True)
        return ParameterSet(entries)

    def unfreeze(self, names: Iterable[str]) -> "ParameterSet":
        entries = dict(self._entries)
        for n in names:
            # exponents stay frozen (enforced in Parameter)
            entries[n] = replace(entries[n], frozen=False)
        return ParameterSet(entries)

    def only_learn(self, names: Iterable[str]) -> "ParameterSet":
        keep = set(names)
        missing = keep - set(self._entries)
        if missing:
            raise KeyError(f"unknown parameters: {sorted(missing)}")
        frozen = self.freeze(n for n in self._entries if n not in keep)
        return frozen.unfreeze(keep)

    def view(self, tape=None) -> tuple[dict, dict]:
        """Coefficient mapping for one forward pass.

        With a tape, every unfrozen parameter becomes a named tape variable;
        frozen ones stay plain floats and so receive no gradient.
        Returns ``(coefficients, leaves)`` where ``leaves`` maps name to Var.
        """
        coeffs: dict = {}
        leaves: dict = {}
        for name, p in self._entries.items():
            if tape is not None and not p.frozen:
                v = tape.variable(p.value, name=name)
                coeffs[name] = leaves[name] = v
            else:
                coeffs[name] = p.value
        return coeffs, leaves
