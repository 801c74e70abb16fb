"""Domain model for the scene-drawing task: clipart gallery, scenes, placements, actions.

Everything here is value-semantic: operations return new objects and never
mutate their inputs, so scenes and actions are safe to share across threads.
Coordinates live in the unit square with (0, 0) at the top-left corner.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

DEFAULT_GALLERY_SIZE = 58


class Size(enum.IntEnum):
    SMALL = 0
    MEDIUM = 1
    LARGE = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "Size":
        try:
            return cls[label.upper()]
        except KeyError:
            raise ValueError(f"unknown size label: {label!r}") from None


SIZE_LABELS = tuple(s.label for s in Size)


class Flip(enum.IntEnum):
    FACING_LEFT = 0
    FACING_RIGHT = 1

    @property
    def label(self) -> str:
        return self.name.lower()

    @property
    def short_label(self) -> str:
        # "left" / "right", used by the synthetic teller templates
        return self.name.lower().removeprefix("facing_")

    @classmethod
    def from_label(cls, label: str) -> "Flip":
        key = label.upper()
        if not key.startswith("FACING_"):
            key = "FACING_" + key
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown flip label: {label!r}") from None


@dataclass(frozen=True)
class GalleryEntry:
    id: int
    name: str
    is_person: bool
    is_symmetric: bool
    expression_count: int
    pose_count: int


class Gallery:
    """Immutable clipart gallery with dense ids 0..G-1."""

    def __init__(self, entries: list[GalleryEntry], manifest_bytes: bytes | None = None):
        self.entries = list(entries)
        self._by_name = {e.name: e.id for e in self.entries}
        raw = manifest_bytes if manifest_bytes is not None else _manifest_bytes(self.entries)
        self.manifest_hash = hashlib.sha256(raw).hexdigest()

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, clipart_id: int) -> GalleryEntry:
        return self.entries[clipart_id]

    def __iter__(self):
        return iter(self.entries)

    def name_of(self, clipart_id: int) -> str:
        return self.entries[clipart_id].name

    def id_of(self, name: str) -> int:
        return self._by_name[name]

    @property
    def person_ids(self) -> list[int]:
        return [e.id for e in self.entries if e.is_person]

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def asymmetric_mask(self) -> np.ndarray:
        return np.array([not e.is_symmetric for e in self.entries], dtype=bool)


def _manifest_bytes(entries: list[GalleryEntry]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["id", "name", "is_person", "is_symmetric", "expression_count", "pose_count"])
    for e in entries:
        writer.writerow([e.id, e.name, int(e.is_person), int(e.is_symmetric), e.expression_count, e.pose_count])
    return buf.getvalue().encode("utf-8")


def load_gallery(manifest_bytes: bytes) -> list[GalleryEntry]:
    """Parse and validate a gallery manifest CSV (see data/gallery.csv for the schema)."""
    text = manifest_bytes.decode("utf-8")
    reader = csv.DictReader(io.StringIO(text))
    expected = ["id", "name", "is_person", "is_symmetric", "expression_count", "pose_count"]
    if reader.fieldnames != expected:
        raise ValueError(f"bad manifest header: {reader.fieldnames}, expected {expected}")
    entries = []
    for lineno, row in enumerate(reader, start=2):
        try:
            entry = GalleryEntry(
                id=int(row["id"]),
                name=row["name"].strip(),
                is_person=bool(int(row["is_person"])),
                is_symmetric=bool(int(row["is_symmetric"])),
                expression_count=int(row["expression_count"]),
                pose_count=int(row["pose_count"]),
            )
        except (TypeError, ValueError, KeyError) as exc:
            raise ValueError(f"malformed manifest row at line {lineno}: {row}") from exc
        entries.append(entry)
    if not entries:
        raise ValueError("empty gallery manifest")
    seen_names = set()
    for i, entry in enumerate(entries):
        if entry.id != i:
            raise ValueError(f"gap in ids: expected id {i}, found {entry.id}")
        if entry.name != entry.name.lower():
            raise ValueError(f"gallery name must be lowercase: {entry.name!r}")
        if entry.name in seen_names:
            raise ValueError(f"duplicate gallery name: {entry.name!r}")
        seen_names.add(entry.name)
        if entry.is_person != (entry.expression_count > 0):
            raise ValueError(f"entry {entry.id}: expression_count>0 must hold iff is_person")
        if entry.is_person != (entry.pose_count > 0):
            raise ValueError(f"entry {entry.id}: pose_count>0 must hold iff is_person")
    return entries


def default_gallery() -> Gallery:
    raw = resources.files("cqsim").joinpath("data/gallery.csv").read_bytes()
    return Gallery(load_gallery(raw), manifest_bytes=raw)


@dataclass(frozen=True)
class Placement:
    clipart: int
    size: Size
    flip: Flip
    x: float
    y: float
    expression: int | None = None
    pose: int | None = None

    def validate(self, gallery: Gallery) -> None:
        if not 0 <= self.clipart < len(gallery):
            raise ValueError(f"clipart id {self.clipart} out of gallery range 0..{len(gallery) - 1}")
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise ValueError(f"position ({self.x}, {self.y}) outside the unit square")
        entry = gallery[self.clipart]
        if entry.is_person:
            if self.expression is None or self.pose is None:
                raise ValueError(f"{entry.name}: person cliparts require expression and pose")
            if not 0 <= self.expression < entry.expression_count:
                raise ValueError(f"{entry.name}: expression {self.expression} out of range")
            if not 0 <= self.pose < entry.pose_count:
                raise ValueError(f"{entry.name}: pose {self.pose} out of range")
        else:
            if self.expression is not None or self.pose is not None:
                raise ValueError(f"{entry.name}: person attributes on non-person clipart")

    def to_dict(self) -> dict:
        d = {
            "clipart": self.clipart,
            "size": self.size.label,
            "flip": self.flip.label,
            "x": self.x,
            "y": self.y,
        }
        d["expression"] = self.expression
        d["pose"] = self.pose
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Placement":
        return cls(
            clipart=int(d["clipart"]),
            size=Size.from_label(d["size"]),
            flip=Flip.from_label(d["flip"]),
            x=float(d["x"]),
            y=float(d["y"]),
            expression=None if d.get("expression") is None else int(d["expression"]),
            pose=None if d.get("pose") is None else int(d["pose"]),
        )


@dataclass(frozen=True)
class Scene:
    """A canvas state: at most one placement per gallery id."""

    placements: dict[int, Placement] = field(default_factory=dict)

    def __post_init__(self):
        for cid, p in self.placements.items():
            if cid != p.clipart:
                raise ValueError(f"placement keyed by {cid} carries clipart {p.clipart}")

    def ids(self) -> set[int]:
        return set(self.placements)

    def get(self, clipart_id: int) -> Placement | None:
        return self.placements.get(clipart_id)

    def __len__(self) -> int:
        return len(self.placements)

    def __contains__(self, clipart_id: int) -> bool:
        return clipart_id in self.placements

    def sorted_placements(self) -> list[Placement]:
        return [self.placements[c] for c in sorted(self.placements)]

    def to_dict(self) -> dict:
        return {"placements": [p.to_dict() for p in self.sorted_placements()]}

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        placements = {}
        for pd in d.get("placements", []):
            p = Placement.from_dict(pd)
            if p.clipart in placements:
                raise ValueError(f"duplicate placement for clipart {p.clipart}")
            placements[p.clipart] = p
        return cls(placements)

    @classmethod
    def of(cls, *placements: Placement) -> "Scene":
        return cls({p.clipart: p for p in placements})


@dataclass(frozen=True)
class Action:
    upserts: tuple[Placement, ...] = ()
    removals: tuple[int, ...] = ()

    def __post_init__(self):
        upsert_ids = [p.clipart for p in self.upserts]
        if len(set(upsert_ids)) != len(upsert_ids):
            raise ValueError("duplicate clipart id in upserts")
        if len(set(self.removals)) != len(self.removals):
            raise ValueError("duplicate clipart id in removals")
        if set(upsert_ids) & set(self.removals):
            raise ValueError("clipart id appears in both upserts and removals")

    def to_dict(self) -> dict:
        return {
            "upserts": [p.to_dict() for p in self.upserts],
            "removals": list(self.removals),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Action":
        return cls(
            upserts=tuple(Placement.from_dict(pd) for pd in d.get("upserts", [])),
            removals=tuple(int(c) for c in d.get("removals", [])),
        )


def apply_action(scene: Scene, action: Action, gallery: Gallery) -> Scene:
    """Apply upserts (full placement replace by id) and removals; absent removals are no-ops."""
    for p in action.upserts:
        p.validate(gallery)
    for cid in action.removals:
        if not 0 <= cid < len(gallery):
            raise ValueError(f"removal id {cid} out of gallery range")
    placements = dict(scene.placements)
    for p in action.upserts:
        placements[p.clipart] = p
    for cid in action.removals:
        placements.pop(cid, None)
    return Scene(placements)


@dataclass(frozen=True)
class SceneConfig:
    min_cliparts: int = 4
    max_cliparts: int = 8
    person_fraction: float = 0.3


def random_scene(rng_seed: int, gallery: Gallery, config: SceneConfig = SceneConfig()) -> Scene:
    """Sample a uniform random scene; same seed always yields the identical scene."""
    if not 1 <= config.min_cliparts <= config.max_cliparts <= len(gallery):
        raise ValueError(
            f"invalid clipart count bounds: 1 <= {config.min_cliparts} <= {config.max_cliparts} <= {len(gallery)}"
        )
    if not 0.0 <= config.person_fraction <= 1.0:
        raise ValueError(f"person_fraction must be in [0,1], got {config.person_fraction}")
    rng = np.random.default_rng(rng_seed)
    n = int(rng.integers(config.min_cliparts, config.max_cliparts + 1))
    persons = gallery.person_ids
    others = [e.id for e in gallery if not e.is_person]
    k = min(int(rng.binomial(n, config.person_fraction)), len(persons), n)
    k = max(k, n - len(others))
    chosen = list(rng.choice(persons, size=k, replace=False)) if k else []
    chosen += list(rng.choice(others, size=n - k, replace=False))
    placements = {}
    for cid in sorted(int(c) for c in chosen):
        entry = gallery[cid]
        placements[cid] = Placement(
            clipart=cid,
            size=Size(int(rng.integers(3))),
            flip=Flip(int(rng.integers(2))),
            x=float(rng.random()),
            y=float(rng.random()),
            expression=int(rng.integers(entry.expression_count)) if entry.is_person else None,
            pose=int(rng.integers(entry.pose_count)) if entry.is_person else None,
        )
    return Scene(placements)
