"""Corpus and annotation ingestion: normalized JSONL contract plus an official-format adapter.

The normalized JSONL format (one dialogue per line) is the internal contract.
The adapter for the official corpus JSON is best-effort: the per-clipart
record layout of the official scene strings is documented nowhere we control,
so the assumptions are spelled out in `_parse_official_scene` and validated
as far as possible (index ranges, canvas bounds).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .world import Flip, Gallery, Placement, Scene, Size

ATTRIBUTE_TAGS = ("size", "position", "orientation", "other")

# official canvas geometry and depth coding (0 = nearest/largest)
OFFICIAL_CANVAS_W = 500.0
OFFICIAL_CANVAS_H = 400.0
DEPTH_TO_SIZE = {0: Size.LARGE, 1: Size.MEDIUM, 2: Size.SMALL}
FLIP_CODE = {0: Flip.FACING_RIGHT, 1: Flip.FACING_LEFT}


@dataclass(frozen=True)
class CorpusTurn:
    teller_text: str
    drawer_text: str
    canvas_after: Scene


@dataclass(frozen=True)
class CorpusDialogue:
    dialogue_id: str
    target: Scene
    turns: tuple[CorpusTurn, ...]

    def __post_init__(self):
        if not self.turns:
            raise ValueError(f"dialogue {self.dialogue_id} has no turns")


@dataclass(frozen=True)
class AnnotationRecord:
    dialogue_id: str
    turn_index: int
    is_cq: bool
    attributes: frozenset[str]


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]


def _scene_from_json(d: dict, gallery: Gallery) -> Scene:
    scene = Scene.from_dict(d)
    for p in scene.placements.values():
        p.validate(gallery)
    return scene


def parse_codraw(raw: bytes, gallery: Gallery, format: str = "normalized") -> list[CorpusDialogue]:
    if format == "normalized":
        return _parse_normalized(raw, gallery)
    if format == "official":
        return _parse_official(raw, gallery)
    raise ValueError(f"unknown corpus format {format!r}")


def _parse_normalized(raw: bytes, gallery: Gallery) -> list[CorpusDialogue]:
    dialogues = []
    for lineno, line in enumerate(raw.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed JSONL at line {lineno}: {exc}") from exc
        try:
            turns = tuple(
                CorpusTurn(
                    teller_text=t["teller_text"],
                    drawer_text=t["drawer_text"],
                    canvas_after=_scene_from_json(t["canvas_after"], gallery),
                )
                for t in doc["turns"]
            )
            dialogues.append(CorpusDialogue(
                dialogue_id=doc["dialogue_id"],
                target=_scene_from_json(doc["target"], gallery),
                turns=turns,
            ))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed dialogue record at line {lineno}: {exc}") from exc
    return dialogues


def serialize_corpus(dialogues: list[CorpusDialogue]) -> bytes:
    lines = []
    for d in dialogues:
        lines.append(json.dumps({
            "dialogue_id": d.dialogue_id,
            "target": d.target.to_dict(),
            "turns": [
                {"teller_text": t.teller_text, "drawer_text": t.drawer_text,
                 "canvas_after": t.canvas_after.to_dict()}
                for t in d.turns
            ],
        }, sort_keys=True))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _parse_official_scene(scene_str: str, gallery: Gallery, where: str) -> Scene:
    """Adapter for official scene strings.

    Assumed layout: comma-separated, first token = clipart count, then per
    clipart 8 fields `png,local_idx,type_idx,gallery_idx,x,y,depth,flip` with
    pixel coordinates on a 500x400 canvas and depth codes 0/1/2 mapping to
    large/medium/small. Person expression/pose are folded into local_idx.
    """
    tokens = [t for t in scene_str.strip().split(",") if t != ""]
    if not tokens:
        return Scene()
    try:
        count = int(tokens[0])
    except ValueError as exc:
        raise ValueError(f"{where}: scene string does not start with a count") from exc
    body = tokens[1:]
    if len(body) != count * 8:
        raise ValueError(f"{where}: expected {count * 8} scene fields, found {len(body)}")
    placements = {}
    for i in range(count):
        png, local_idx, _type_idx, gallery_idx, x, y, depth, flip = body[i * 8:(i + 1) * 8]
        try:
            cid = int(gallery_idx)
            local = int(local_idx)
            px, py = float(x), float(y)
            depth_code, flip_code = int(depth), int(flip)
        except ValueError as exc:
            raise ValueError(f"{where}: malformed clipart record {i} ({png})") from exc
        if not 0 <= cid < len(gallery):
            raise ValueError(f"{where}: clipart index {cid} out of gallery range")
        if not (0.0 <= px <= OFFICIAL_CANVAS_W and 0.0 <= py <= OFFICIAL_CANVAS_H):
            raise ValueError(f"{where}: coordinate ({px}, {py}) outside canvas bounds")
        if depth_code not in DEPTH_TO_SIZE:
            raise ValueError(f"{where}: unknown depth code {depth_code}")
        if flip_code not in FLIP_CODE:
            raise ValueError(f"{where}: unknown flip code {flip_code}")
        entry = gallery[cid]
        placements[cid] = Placement(
            clipart=cid,
            size=DEPTH_TO_SIZE[depth_code],
            flip=FLIP_CODE[flip_code],
            x=px / OFFICIAL_CANVAS_W,
            y=py / OFFICIAL_CANVAS_H,
            expression=(local % entry.expression_count) if entry.is_person else None,
            pose=((local // entry.expression_count) % entry.pose_count) if entry.is_person else None,
        )
    return Scene(placements)


def _parse_official(raw: bytes, gallery: Gallery) -> list[CorpusDialogue]:
    doc = json.loads(raw.decode("utf-8"))
    data = doc.get("data", doc)
    dialogues = []
    for dialogue_id in data:
        record = data[dialogue_id]
        target = _parse_official_scene(record["abs_t"], gallery, f"{dialogue_id}/target")
        turns = []
        for t_idx, turn in enumerate(record["dialog"]):
            turns.append(CorpusTurn(
                teller_text=turn.get("msg_t", ""),
                drawer_text=turn.get("msg_d", ""),
                canvas_after=_parse_official_scene(
                    turn.get("abs_d", ""), gallery, f"{dialogue_id}/turn{t_idx}"),
            ))
        dialogues.append(CorpusDialogue(dialogue_id, target, tuple(turns)))
    return dialogues


def parse_icr(raw: bytes) -> list[AnnotationRecord]:
    """Parse the clarification-annotation CSV (dialogue_id,turn_index,is_cq,attributes)."""
    reader = csv.DictReader(io.StringIO(raw.decode("utf-8")))
    expected = ["dialogue_id", "turn_index", "is_cq", "attributes"]
    if reader.fieldnames is None:
        return []
    if reader.fieldnames != expected:
        raise ValueError(f"bad annotation header: {reader.fieldnames}, expected {expected}")
    records = []
    seen = set()
    for lineno, row in enumerate(reader, start=2):
        try:
            is_cq = bool(int(row["is_cq"]))
            turn_index = int(row["turn_index"])
        except (TypeError, ValueError) as exc:
            raise ValueError(f"malformed annotation row at line {lineno}") from exc
        attr_field = (row["attributes"] or "").strip()
        attributes = frozenset(a for a in attr_field.split("|") if a)
        for tag in attributes:
            if tag not in ATTRIBUTE_TAGS:
                raise ValueError(f"unknown attribute tag {tag!r} at line {lineno}")
        if is_cq != bool(attributes):
            raise ValueError(
                f"line {lineno}: attributes must be nonempty exactly when is_cq is 1")
        key = (row["dialogue_id"], turn_index)
        if key in seen:
            raise ValueError(f"duplicate annotation key {key} at line {lineno}")
        seen.add(key)
        records.append(AnnotationRecord(row["dialogue_id"], turn_index, is_cq, attributes))
    return records


@dataclass
class JoinResult:
    by_key: dict[tuple[str, int], AnnotationRecord]
    orphaned: list[AnnotationRecord] = field(default_factory=list)

    @property
    def orphan_count(self) -> int:
        return len(self.orphaned)


def join_annotations(corpus: list[CorpusDialogue],
                     records: list[AnnotationRecord]) -> JoinResult:
    """Key annotations by (dialogue_id, turn_index); unmatched ones are kept and counted."""
    turn_counts = {d.dialogue_id: len(d.turns) for d in corpus}
    result = JoinResult(by_key={})
    for rec in records:
        n = turn_counts.get(rec.dialogue_id)
        if n is None or not 0 <= rec.turn_index < n:
            result.orphaned.append(rec)
        result.by_key[(rec.dialogue_id, rec.turn_index)] = rec
    return result


def split_corpus(corpus: list[CorpusDialogue], seed: int,
                 official_split: dict[str, str] | None = None) -> CorpusSplit:
    """80/10/10 random split by dialogue count, or the supplied official assignment."""
    if not corpus:
        raise ValueError("cannot split an empty corpus")
    ids = [d.dialogue_id for d in corpus]
    if official_split is not None:
        buckets = {"train": [], "val": [], "test": []}
        for did in ids:
            part = official_split.get(did)
            if part not in buckets:
                raise ValueError(f"dialogue {did} missing from the official split")
            buckets[part].append(did)
        return CorpusSplit(tuple(buckets["train"]), tuple(buckets["val"]), tuple(buckets["test"]))
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n = len(order)
    n_train = round(0.8 * n)
    n_val = round(0.1 * n)
    return CorpusSplit(
        train=tuple(order[:n_train]),
        val=tuple(order[n_train:n_train + n_val]),
        test=tuple(order[n_train + n_val:]),
    )


def split_from_id_prefixes(corpus: list[CorpusDialogue]) -> CorpusSplit | None:
    """Recover the official split from `train_*/val_*/test_*` dialogue-id prefixes."""
    buckets = {"train": [], "val": [], "test": []}
    for d in corpus:
        prefix = d.dialogue_id.split("_", 1)[0]
        if prefix not in buckets:
            return None
        buckets[prefix].append(d.dialogue_id)
    return CorpusSplit(tuple(buckets["train"]), tuple(buckets["val"]), tuple(buckets["test"]))


@dataclass(frozen=True)
class CorpusStats:
    n_dialogues: int
    n_utterances: int
    mean_turns: float
    frac_dialogues_with_cq: float | None = None
    mean_cqs_per_cq_dialogue: float | None = None


def corpus_stats(corpus: list[CorpusDialogue],
                 records: list[AnnotationRecord] | None = None) -> CorpusStats:
    n = len(corpus)
    turns = [len(d.turns) for d in corpus]
    frac_cq = mean_cqs = None
    if records is not None:
        cq_counts: dict[str, int] = {}
        for rec in records:
            if rec.is_cq:
                cq_counts[rec.dialogue_id] = cq_counts.get(rec.dialogue_id, 0) + 1
        with_cq = [d.dialogue_id for d in corpus if cq_counts.get(d.dialogue_id, 0) > 0]
        frac_cq = len(with_cq) / n if n else 0.0
        mean_cqs = (sum(cq_counts[d] for d in with_cq) / len(with_cq)) if with_cq else 0.0
    return CorpusStats(
        n_dialogues=n,
        n_utterances=2 * sum(turns),
        mean_turns=sum(turns) / n if n else 0.0,
        frac_dialogues_with_cq=frac_cq,
        mean_cqs_per_cq_dialogue=mean_cqs,
    )
