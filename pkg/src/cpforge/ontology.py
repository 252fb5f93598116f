"""Constraint-type ontology and constraint profiles.

A problem's constraint profile is the set of global constraint types an
analyzer detected in its description. Profiles are the retrieval key for
exemplar ranking, so parsing has to stay total: analyzer output is free
text and frequently misspells or invents names. Unknown names are dropped
(and counted), never raised.

The shipped ontology is a superset reconstruction of the global-constraint
catalogs common in CP modeling toolkits; it is user-extensible through the
``ontology_path`` config key.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ProfileParseError

log = logging.getLogger(__name__)

_NON_ALNUM = re.compile(r"[^a-z0-9]+")


def _fold(name: str) -> str:
    """Case-fold and strip separators/punctuation for alias lookup."""
    return _NON_ALNUM.sub("", name.casefold())


@dataclass(frozen=True, order=True)
class ConstraintType:
    """One entry of the ontology; compared case-exact on the canonical form."""

    canonical_name: str

    def __str__(self) -> str:
        return self.canonical_name


@dataclass
class Ontology:
    """Closed set of constraint types plus an alias map onto canonical names.

    The alias map is total over the entries (every canonical name maps to
    itself after folding) and no alias may resolve to two canonicals.
    """

    entries: tuple[ConstraintType, ...]
    aliases: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        folded: dict[str, str] = {}
        for entry in self.entries:
            folded[_fold(entry.canonical_name)] = entry.canonical_name
        for alias, canonical in self.aliases.items():
            key = _fold(alias)
            if key in folded and folded[key] != canonical:
                raise ValueError(
                    f"alias {alias!r} maps to both {folded[key]!r} and {canonical!r}"
                )
            folded[key] = canonical
        self.aliases = folded
        self._by_canonical = {e.canonical_name: e for e in self.entries}

    def __contains__(self, item: object) -> bool:
        if isinstance(item, ConstraintType):
            return item.canonical_name in self._by_canonical
        return str(item) in self._by_canonical

    def __iter__(self) -> Iterator[ConstraintType]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, canonical_name: str) -> ConstraintType:
        return self._by_canonical[canonical_name]


@dataclass(frozen=True)
class ConstraintProfile:
    """Set of constraint types detected in one problem description."""

    types: frozenset[ConstraintType] = frozenset()

    @classmethod
    def of(cls, *names: str) -> "ConstraintProfile":
        return cls(frozenset(ConstraintType(n) for n in names))

    def __contains__(self, item: object) -> bool:
        if isinstance(item, ConstraintType):
            return item in self.types
        return ConstraintType(str(item)) in self.types

    def __len__(self) -> int:
        return len(self.types)

    def __bool__(self) -> bool:
        return bool(self.types)

    def names(self) -> list[str]:
        return sorted(t.canonical_name for t in self.types)

    def render(self) -> str:
        """Canonical text form; parse_profile(render(p)) round-trips."""
        return json.dumps(self.names())

    def union(self, other: "ConstraintProfile") -> "ConstraintProfile":
        return ConstraintProfile(self.types | other.types)


def normalize_constraint_name(raw: str, ontology: Ontology) -> ConstraintType | None:
    """Map a free-text constraint name onto its canonical ontology entry.

    Returns None when the name matches nothing; unmatched input is a
    value, not an error.
    """
    canonical = ontology.aliases.get(_fold(raw))
    if canonical is None:
        return None
    return ontology.get(canonical)


# A bracketed list of quoted names, e.g. ["Circuit", "Sum"] or ['Circuit'].
_BRACKET_LIST = re.compile(r"\[[^\[\]]*\]", re.DOTALL)
_QUOTED_NAME = re.compile(r"""["']([^"']+)["']""")


def _parse_bracketed(raw: str) -> tuple[list[str] | None, bool]:
    """Return (names, saw_bracketed_list) from the first parseable list."""
    saw_list = False
    for match in _BRACKET_LIST.finditer(raw):
        text = match.group(0)
        try:
            parsed = json.loads(text.replace("'", '"'))
        except json.JSONDecodeError:
            parsed = None
        if isinstance(parsed, list) and all(isinstance(x, str) for x in parsed):
            return parsed, True
        names = _QUOTED_NAME.findall(text)
        if names:
            return names, True
        if text.strip() == "[]":
            return [], True
        saw_list = True
    return None, saw_list


_WORD = re.compile(r"[A-Za-z0-9_]+")


def _scan_aliases(raw: str, ontology: Ontology) -> list[str]:
    """Fallback: scan word tokens (and short joins of adjacent tokens) for
    any known alias. Joining covers spellings like "bin packing" or
    "no-overlap" that tokenize into separate words."""
    tokens = _WORD.findall(raw)
    found: list[str] = []
    seen: set[str] = set()
    for i in range(len(tokens)):
        for width in (1, 2, 3):
            candidate = _fold("".join(tokens[i : i + width]))
            canonical = ontology.aliases.get(candidate)
            if canonical is not None and canonical not in seen:
                seen.add(canonical)
                found.append(canonical)
    return found


def parse_profile(raw_llm_output: str, ontology: Ontology) -> ConstraintProfile:
    """Parse an analyzer response into a constraint profile.

    Primary path: the first bracketed list of quoted names in the text.
    Fallback: scan the whole text for alias occurrences. Names outside
    the ontology are dropped and counted in the log.

    Raises ProfileParseError only when the text is non-empty, contains a
    bracketed list that failed to parse structurally, and the fallback
    scan also found nothing; callers downgrade that to an empty profile.
    """
    text = raw_llm_output.strip()
    if not text:
        return ConstraintProfile()

    names, saw_list = _parse_bracketed(text)
    structural_failure = saw_list and names is None
    parsed_empty_list = names is not None and not names

    types: set[ConstraintType] = set()
    dropped = 0
    for name in names or ():
        ct = normalize_constraint_name(name, ontology)
        if ct is None:
            dropped += 1
        else:
            types.add(ct)
    if dropped:
        log.info("parse_profile dropped %d unknown constraint name(s)", dropped)

    if not types and not parsed_empty_list:
        # Primary path yielded nothing usable; fall back to the alias scan.
        for name in _scan_aliases(text, ontology):
            types.add(ontology.get(name))
        if not types and structural_failure:
            raise ProfileParseError(
                f"analyzer output contained an unparseable bracketed list: {text[:200]!r}"
            )

    return ConstraintProfile(frozenset(types))


def scan_profile(text: str, ontology: Ontology) -> ConstraintProfile:
    """Profile of every ontology name mentioned anywhere in free text."""
    return ConstraintProfile(
        frozenset(ontology.get(name) for name in _scan_aliases(text, ontology))
    )


def load_ontology(path: str | Path | None = None) -> Ontology:
    """Load an ontology file, or the shipped default when path is None.

    File format: a JSON list of {"canonical": name, "aliases": [names]}.
    """
    if path is None:
        data = json.loads(
            resources.files("cpforge").joinpath("data/ontology.json").read_text("utf-8")
        )
    else:
        data = json.loads(Path(path).read_text("utf-8"))
    entries: list[ConstraintType] = []
    aliases: dict[str, str] = {}
    for record in data:
        canonical = record["canonical"]
        entries.append(ConstraintType(canonical))
        for alias in record.get("aliases", ()):
            aliases[alias] = canonical
    return Ontology(entries=tuple(entries), aliases=aliases)


def profile_from_names(names: Iterable[str], ontology: Ontology) -> ConstraintProfile:
    """Build a profile from canonical-or-alias names, dropping unknowns."""
    types = set()
    for name in names:
        ct = normalize_constraint_name(name, ontology)
        if ct is not None:
            types.add(ct)
    return ConstraintProfile(frozenset(types))
