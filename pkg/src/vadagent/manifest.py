"""Benchmark manifest: loading, validation, split serving, and the label
boundary between evaluation code and agent-facing code."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

DOMAIN_CODES = tuple(f"D{i}" for i in range(1, 13))
SPLITS = ("calibration", "dev", "test")

# Domain facts fixed by the benchmark definition: which domains have a
# trustworthy cached expert and which are pixel-aligned.
EXPERT_UNAVAILABLE = frozenset({"D2", "D4", "D8", "D11", "D12"})
ALIGNED_DOMAINS = frozenset({"D1", "D3", "D5"})

# Split sizes enforced for manifests declaring the full benchmark profile.
FULL_SPLIT_SIZES = {"calibration": 20, "dev": 40, "test": 120}
FULL_TEST_EXCEPTIONS = {"D7": 98}


class ManifestError(Exception):
    pass


class ManifestParseError(ManifestError):
    pass


class ManifestValidationError(ManifestError):
    """Names the first violated invariant."""


@dataclass(frozen=True)
class DomainSpec:
    code: str
    family: str
    aligned: bool
    expert_available: bool
    descriptor_generic: str
    descriptor_task: str
    hint: str


@dataclass(frozen=True)
class ItemRecord:
    id: str
    domain: str
    category: str
    query_ref: str
    reference_refs: tuple[str, ...]
    split: str
    label: Optional[bool] = None


@dataclass(frozen=True)
class ItemView:
    """An item as the agent and scorers are allowed to see it: no label."""

    id: str
    domain: str
    category: str
    query_ref: str
    reference_refs: tuple[str, ...]
    split: str


@dataclass
class Manifest:
    version: str
    profile: str
    hash_algorithm: str
    domains: list[DomainSpec]
    items: list[ItemRecord]
    hashes: dict[str, str] = field(default_factory=dict)

    def domain(self, code: str) -> DomainSpec:
        for d in self.domains:
            if d.code == code:
                return d
        raise KeyError(f"unknown domain code: {code}")

    @property
    def domain_map(self) -> dict[str, DomainSpec]:
        return {d.code: d for d in self.domains}

    def domain_order(self) -> list[str]:
        return [d.code for d in self.domains]


def agent_view(item: ItemRecord | ItemView) -> ItemView:
    """Copy of an item with the label removed; idempotent on views."""
    if isinstance(item, ItemView):
        return item
    return ItemView(
        id=item.id,
        domain=item.domain,
        category=item.category,
        query_ref=item.query_ref,
        reference_refs=tuple(item.reference_refs),
        split=item.split,
    )


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ManifestValidationError(message)


def _parse_domain(raw: dict) -> DomainSpec:
    try:
        spec = DomainSpec(
            code=str(raw["code"]),
            family=str(raw["family"]),
            aligned=bool(raw["aligned"]),
            expert_available=bool(raw["expert_available"]),
            descriptor_generic=str(raw.get("descriptor_generic", "")),
            descriptor_task=str(raw.get("descriptor_task", "")),
            hint=str(raw.get("hint", "")),
        )
    except KeyError as e:
        raise ManifestValidationError(f"domain entry missing field {e}") from e
    _require(spec.code in DOMAIN_CODES, f"unknown domain code {spec.code!r}")
    expected_expert = spec.code not in EXPERT_UNAVAILABLE
    _require(
        spec.expert_available == expected_expert,
        f"domain {spec.code}: expert_available must be {expected_expert}",
    )
    expected_aligned = spec.code in ALIGNED_DOMAINS
    _require(
        spec.aligned == expected_aligned,
        f"domain {spec.code}: aligned must be {expected_aligned}",
    )
    return spec


def _parse_item(raw: dict, domain_codes: set[str]) -> ItemRecord:
    try:
        refs = tuple(str(r) for r in raw["reference_refs"])
        item = ItemRecord(
            id=str(raw["id"]),
            domain=str(raw["domain"]),
            category=str(raw.get("category", "")),
            query_ref=str(raw["query_ref"]),
            reference_refs=refs,
            split=str(raw["split"]),
            label=None if raw.get("label") is None else bool(raw["label"]),
        )
    except KeyError as e:
        raise ManifestValidationError(f"item entry missing field {e}") from e
    _require(item.domain in domain_codes, f"item {item.id}: undeclared domain {item.domain}")
    _require(item.split in SPLITS, f"item {item.id}: invalid split {item.split!r}")
    _require(
        1 <= len(item.reference_refs) <= 10,
        f"item {item.id}: reference count {len(item.reference_refs)} outside 1..10",
    )
    _require(
        item.query_ref not in item.reference_refs,
        f"item {item.id}: a reference locator equals the query locator",
    )
    return item


def load_manifest(path: str | Path) -> Manifest:
    """Load and validate a manifest file.

    Manifests declaring ``profile: "full"`` additionally enforce the frozen
    per-domain split sizes; toy manifests (any other profile) keep all
    per-item invariants but may be any size.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestParseError(f"cannot parse manifest {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ManifestParseError("manifest root must be an object")
    for key in ("version", "domains", "items"):
        if key not in raw:
            raise ManifestValidationError(f"manifest missing field {key!r}")

    domains = [_parse_domain(d) for d in raw["domains"]]
    codes = [d.code for d in domains]
    _require(len(set(codes)) == len(codes), "duplicate domain codes")

    items = [_parse_item(i, set(codes)) for i in raw["items"]]
    ids = [i.id for i in items]
    _require(len(set(ids)) == len(ids), "duplicate item ids")

    manifest = Manifest(
        version=str(raw["version"]),
        profile=str(raw.get("profile", "toy")),
        hash_algorithm=str(raw.get("hash_algorithm", "sha256")),
        domains=domains,
        items=items,
        hashes={str(k): str(v) for k, v in raw.get("hashes", {}).items()},
    )
    if manifest.profile == "full":
        _validate_full_splits(manifest)
    return manifest


def _validate_full_splits(manifest: Manifest) -> None:
    for d in manifest.domains:
        for split in SPLITS:
            expected = FULL_SPLIT_SIZES[split]
            if split == "test" and d.code in FULL_TEST_EXCEPTIONS:
                expected = FULL_TEST_EXCEPTIONS[d.code]
            got = sum(1 for i in manifest.items if i.domain == d.code and i.split == split)
            _require(
                got == expected,
                f"domain {d.code}: {split} split has {got} items, expected {expected}",
            )


def items_for(
    manifest: Manifest, split: str, domain: Optional[str] = None
) -> list[ItemRecord]:
    """Items of a split (optionally one domain), in manifest file order."""
    if split not in SPLITS:
        raise ValueError(f"invalid split {split!r}")
    return [
        i
        for i in manifest.items
        if i.split == split and (domain is None or i.domain == domain)
    ]


def canonical_domain_table() -> list[DomainSpec]:
    """The packaged 12-domain table (descriptors, hints, gate flags)."""
    raw = json.loads(
        resources.files("vadagent").joinpath("data/domains.json").read_text()
    )
    return [_parse_domain(d) for d in raw["domains"]]


def manifest_to_dict(manifest: Manifest) -> dict:
    return {
        "version": manifest.version,
        "profile": manifest.profile,
        "hash_algorithm": manifest.hash_algorithm,
        "domains": [
            {
                "code": d.code,
                "family": d.family,
                "aligned": d.aligned,
                "expert_available": d.expert_available,
                "descriptor_generic": d.descriptor_generic,
                "descriptor_task": d.descriptor_task,
                "hint": d.hint,
            }
            for d in manifest.domains
        ],
        "items": [
            {
                "id": i.id,
                "domain": i.domain,
                "category": i.category,
                "query_ref": i.query_ref,
                "reference_refs": list(i.reference_refs),
                "split": i.split,
                "label": i.label,
            }
            for i in manifest.items
        ],
        "hashes": dict(manifest.hashes),
    }


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest_to_dict(manifest), indent=2) + "\n")


def strip_labels(manifest: Manifest) -> Manifest:
    """A copy of the manifest with every item label removed."""
    return replace(
        manifest, items=[replace(i, label=None) for i in manifest.items]
    )
