"""Turn engine: teller scripts, the within-turn clarification loop, transcripts.

A dialogue turn runs: teller instruction -> drawer forward + action ->
uncertainty -> policy decision; when the policy fires, the rendered question
is answered from the ground-truth scene and the drawer runs a second forward
on (question + answer) against the updated canvas. Everything is
deterministic given the seeds, scripts, and policy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import clarification as cq
from .drawer import DrawerOutput, DrawerParams, Ensemble, TrainingTurn, encode_canvas, encode_text, forward
from .uncertainty import SELECT_RAW, TurnUncertainty, turn_uncertainty
from .world import (Action, Flip, Gallery, Placement, Scene, SceneConfig, Size,
                    apply_action, random_scene)

ROW_NAMES = ("top", "middle", "bottom")
COL_NAMES = ("left", "center", "right")


def region_name(x: float, y: float) -> str:
    """Map unit-square coordinates to a 3x3 grid cell name (y grows downward)."""
    col = COL_NAMES[min(2, int(x * 3))]
    row = ROW_NAMES[min(2, int(y * 3))]
    return f"{row} {col}"


@dataclass(frozen=True)
class SyntheticTellerConfig:
    min_cliparts_per_turn: int = 1
    max_cliparts_per_turn: int = 2
    omit_size_p: float = 0.7
    omit_flip_p: float = 0.5

    def __post_init__(self):
        for p in (self.omit_size_p, self.omit_flip_p):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"omission probability {p} outside [0, 1]")


@dataclass(frozen=True)
class DescribedClipart:
    clipart: int
    size_given: bool
    flip_given: bool


def synthetic_instruction(target: Scene, already_described: set[int],
                          config: SyntheticTellerConfig, rng: np.random.Generator,
                          gallery: Gallery) -> tuple[str, list[DescribedClipart]]:
    """Template instruction describing 1-2 not-yet-described cliparts of the target."""
    remaining = sorted(target.ids() - already_described)
    if not remaining:
        raise ValueError("nothing left to describe")
    k = int(rng.integers(config.min_cliparts_per_turn, config.max_cliparts_per_turn + 1))
    k = min(k, len(remaining))
    ids = sorted(int(c) for c in rng.choice(remaining, size=k, replace=False))
    phrases = []
    described = []
    for cid in ids:
        p = target.get(cid)
        size_given = rng.random() >= config.omit_size_p
        flip_given = rng.random() >= config.omit_flip_p
        words = ["a"]
        if size_given:
            words.append(p.size.label)
        words.append(gallery.name_of(cid))
        if flip_given:
            words.append(f"facing {p.flip.short_label}")
        words.append(f"at the {region_name(p.x, p.y)}")
        phrases.append(" ".join(words))
        described.append(DescribedClipart(cid, size_given, flip_given))
    return "add " + " and ".join(phrases), described


@dataclass
class TellerScript:
    """A fixed instruction sequence plus the ground truth used to answer questions."""

    dialogue_id: str
    instructions: list[str]
    target: Scene
    size_omitted_turns: list[bool] = field(default_factory=list)  # synthetic metadata


def synthetic_script(dialogue_id: str, target: Scene, config: SyntheticTellerConfig,
                     rng: np.random.Generator, gallery: Gallery) -> TellerScript:
    instructions, omitted_flags = [], []
    described: set[int] = set()
    while described != target.ids():
        text, infos = synthetic_instruction(target, described, config, rng, gallery)
        instructions.append(text)
        omitted_flags.append(any(not d.size_given for d in infos))
        described.update(d.clipart for d in infos)
    return TellerScript(dialogue_id, instructions, target, omitted_flags)


def build_eval_scripts(n_dialogues: int, gallery: Gallery, seed: int,
                       teller_config: SyntheticTellerConfig = SyntheticTellerConfig(),
                       scene_config: SceneConfig = SceneConfig(),
                       id_prefix: str = "syn") -> list[TellerScript]:
    scripts = []
    for i in range(n_dialogues):
        rng = np.random.default_rng([seed, i])
        target = random_scene(int(rng.integers(2**62)), gallery, scene_config)
        scripts.append(synthetic_script(f"{id_prefix}-{i:05d}", target, teller_config, rng, gallery))
    return scripts


# --- the engine ---------------------------------------------------------------

@dataclass(frozen=True)
class TurnRecord:
    turn_index: int
    teller_text: str
    action: Action
    drawer_reply: str
    cq: cq.ClarificationExchange | None
    post_cq_action: Action | None
    canvas_after: Scene
    uncertainty: TurnUncertainty


@dataclass
class DialogueTranscript:
    dialogue_id: str
    target_scene: Scene
    turns: list[TurnRecord]
    final_scene: Scene
    latest_size_dists: dict[int, np.ndarray]

    @property
    def cq_count(self) -> int:
        return sum(1 for t in self.turns if t.cq is not None)

    def size_pairs(self) -> list[tuple[Size, Size]]:
        """(predicted, true) sizes over cliparts present in both final canvas and target."""
        pairs = []
        for cid in sorted(self.final_scene.ids() & self.target_scene.ids()):
            pairs.append((self.final_scene.get(cid).size, self.target_scene.get(cid).size))
        return pairs

    def calibration_rows(self) -> tuple[list[np.ndarray], list[int]]:
        """Size distributions vs ground-truth size over final-canvas cliparts in the target."""
        probs, labels = [], []
        for cid in sorted(self.final_scene.ids() & self.target_scene.ids()):
            dist = self.latest_size_dists.get(cid)
            if dist is None:
                continue
            probs.append(dist)
            labels.append(int(self.target_scene.get(cid).size))
        return probs, labels


def action_from_output(output: DrawerOutput, gallery: Gallery) -> Action:
    """Upsert every clipart with score > 0 using its predicted attributes."""
    upserts = []
    for cid in output.selected_ids():
        entry = gallery[cid]
        upserts.append(Placement(
            clipart=cid,
            size=Size(int(np.argmax(output.size_dist[cid]))),
            flip=Flip(int(np.argmax(output.flip_dist[cid]))),
            x=float(output.pos[cid, 0]),
            y=float(output.pos[cid, 1]),
            expression=0 if entry.is_person else None,
            pose=0 if entry.is_person else None,
        ))
    return Action(upserts=tuple(upserts))


@dataclass
class PendingQuestion:
    question_text: str
    targets: list[int]
    teller_text: str
    action: Action
    uncertainty: TurnUncertainty


@dataclass
class InstructionOutcome:
    action: Action
    canvas: Scene
    uncertainty: TurnUncertainty
    question: str | None
    question_targets: list[int]


class DialogueEngine:
    """Single-dialogue state machine, shared by the batch runner and the HTTP service."""

    def __init__(self, dialogue_id: str, params: DrawerParams, policy: cq.ClarificationPolicy,
                 gallery: Gallery, ensemble: Ensemble | None = None,
                 want_position: bool = False, select_mode: str = SELECT_RAW,
                 policy_rng: np.random.Generator | None = None,
                 dedup_questions: bool = False):
        self.dialogue_id = dialogue_id
        self.params = params
        self.policy = policy
        self.gallery = gallery
        self.ensemble = ensemble
        self.want_position = want_position
        self.select_mode = select_mode
        self.policy_rng = policy_rng
        self.dedup_questions = dedup_questions
        self.canvas = Scene()
        self.prev_reply = ""
        self.turn_index = 0
        self.turns: list[TurnRecord] = []
        self.pending: PendingQuestion | None = None
        self.latest_size_dists: dict[int, np.ndarray] = {}
        self.asked_cliparts: set[int] = set()

    @property
    def theta(self) -> float | None:
        return self.policy.theta if isinstance(self.policy, cq.ThresholdPolicy) else None

    def set_policy(self, policy: cq.ClarificationPolicy) -> None:
        self.policy = policy

    def _run_forward(self, input_text: str) -> tuple[DrawerOutput, list[DrawerOutput] | None]:
        out = forward(self.params, input_text, self.canvas, self.gallery)
        member_outputs = None
        if self.ensemble is not None:
            member_outputs = self.ensemble.forward_all(input_text, self.canvas, self.gallery)
        return out, member_outputs

    def _apply(self, output: DrawerOutput) -> Action:
        action = action_from_output(output, self.gallery)
        self.canvas = apply_action(self.canvas, action, self.gallery)
        for p in action.upserts:
            self.latest_size_dists[p.clipart] = output.size_dist[p.clipart].copy()
        return action

    def observe_instruction(self, teller_text: str) -> InstructionOutcome:
        if self.pending is not None:
            raise RuntimeError("a clarification question is pending; answer it first")
        input_text = f"{self.prev_reply} {teller_text}".strip()
        canvas_before = self.canvas
        out, member_outputs = self._run_forward(input_text)
        action = self._apply(out)
        tu = turn_uncertainty(out, ensemble_outputs=member_outputs,
                              select_mode=self.select_mode,
                              want_position=self.want_position)
        features = None
        if isinstance(self.policy, cq.DeciderPolicy):
            tokens = self.params.vocab.encode(input_text)
            features = np.concatenate([encode_text(self.params, tokens),
                                       encode_canvas(canvas_before, self.gallery)])
        ctx = cq.DecideContext(dialogue_id=self.dialogue_id, turn_index=self.turn_index,
                               rng=self.policy_rng, features=features)
        targets = cq.decide(self.policy, tu, ctx)
        if self.dedup_questions:
            targets = [cid for cid in targets if cid not in self.asked_cliparts]
        if targets:
            self.asked_cliparts.update(targets)
            question = cq.render_question(targets, self.gallery)
            self.pending = PendingQuestion(question, targets, teller_text, action, tu)
            return InstructionOutcome(action, self.canvas, tu, question, targets)
        self._record_turn(teller_text, action, tu, None, None)
        return InstructionOutcome(action, self.canvas, tu, None, [])

    def submit_answer(self, answer_text: str,
                      answered: list[tuple[int, Size | None]],
                      fallback: bool = False) -> tuple[Action, TurnUncertainty]:
        if self.pending is None:
            raise RuntimeError("no clarification question is pending")
        pending = self.pending
        self.pending = None
        input_text = f"{pending.question_text} {answer_text}"
        out, _ = self._run_forward(input_text)
        post_action = self._apply(out)
        post_tu = turn_uncertainty(out, select_mode=self.select_mode)
        exchange = cq.ClarificationExchange(
            question_text=pending.question_text,
            answer_text=answer_text,
            targets=tuple((cid, size) for cid, size in answered),
            turn_index=self.turn_index,
            fallback=fallback,
        )
        self._record_turn(pending.teller_text, pending.action, pending.uncertainty,
                          exchange, post_action)
        return post_action, post_tu

    def _record_turn(self, teller_text: str, action: Action, tu: TurnUncertainty,
                     exchange: cq.ClarificationExchange | None,
                     post_action: Action | None) -> None:
        self.turns.append(TurnRecord(
            turn_index=self.turn_index,
            teller_text=teller_text,
            action=action,
            drawer_reply="ok",
            cq=exchange,
            post_cq_action=post_action,
            canvas_after=self.canvas,
            uncertainty=tu,
        ))
        self.prev_reply = "ok"
        self.turn_index += 1

    def transcript(self, target_scene: Scene) -> DialogueTranscript:
        return DialogueTranscript(
            dialogue_id=self.dialogue_id,
            target_scene=target_scene,
            turns=list(self.turns),
            final_scene=self.canvas,
            latest_size_dists=dict(self.latest_size_dists),
        )


@dataclass
class RunSpec:
    script: TellerScript
    params: DrawerParams
    policy: cq.ClarificationPolicy
    gallery: Gallery
    ensemble: Ensemble | None = None
    want_position: bool = False
    select_mode: str = SELECT_RAW
    policy_seed: int = 0
    dedup_questions: bool = False


def run_dialogue(spec: RunSpec) -> DialogueTranscript:
    """Run one scripted dialogue to completion, answering questions from the target scene."""
    engine = DialogueEngine(
        dialogue_id=spec.script.dialogue_id,
        params=spec.params,
        policy=spec.policy,
        gallery=spec.gallery,
        ensemble=spec.ensemble,
        want_position=spec.want_position,
        select_mode=spec.select_mode,
        policy_rng=np.random.default_rng([spec.policy_seed, hash_id(spec.script.dialogue_id)]),
        dedup_questions=spec.dedup_questions,
    )
    for teller_text in spec.script.instructions:
        outcome = engine.observe_instruction(teller_text)
        if outcome.question is not None:
            answer_text, answered, fallback = cq.render_answer(
                outcome.question_targets, spec.script.target, spec.gallery)
            engine.submit_answer(answer_text, answered, fallback)
    return engine.transcript(spec.script.target)


def suppress_cqs(spec: RunSpec) -> DialogueTranscript:
    """The !CQ counterfactual: the identical run with the policy forced silent."""
    return run_dialogue(replace(spec, policy=cq.SILENT))


def hash_id(dialogue_id: str) -> int:
    # stable across processes (unlike hash()), small enough for SeedSequence entropy
    import hashlib
    return int.from_bytes(hashlib.sha256(dialogue_id.encode()).digest()[:8], "big")


# --- synthetic training corpus -------------------------------------------------

@dataclass(frozen=True)
class TrainingCorpusConfig:
    teller: SyntheticTellerConfig = SyntheticTellerConfig()
    scene: SceneConfig = SceneConfig()
    cq_rate: float = 0.7  # chance an omitted-size turn gets a worked clarification example


def synthetic_training_turns(n_dialogues: int, gallery: Gallery, seed: int,
                             config: TrainingCorpusConfig = TrainingCorpusConfig()
                             ) -> list[TrainingTurn]:
    """Demonstration turns for supervised training.

    Sizes/flips omitted from the text are placed with a random guess, so the
    only consistent signal for them is the marginal distribution; a fraction
    of those turns is followed by a clarification exchange whose target is the
    same clipart already on the canvas (teaching re-selection on update).
    """
    turns: list[TrainingTurn] = []
    for i in range(n_dialogues):
        rng = np.random.default_rng([seed, i])
        target = random_scene(int(rng.integers(2**62)), gallery, config.scene)
        canvas = Scene()
        prev_reply = ""
        described: set[int] = set()
        while described != target.ids():
            text, infos = synthetic_instruction(target, described, config.teller, rng, gallery)
            input_text = f"{prev_reply} {text}".strip()
            targets = {d.clipart: target.get(d.clipart) for d in infos}
            turns.append(TrainingTurn(input_text, canvas, targets))
            # demonstrator placement: guesses when the text under-specifies
            upserts = []
            for d in infos:
                true_p = target.get(d.clipart)
                placed = replace(
                    true_p,
                    size=true_p.size if d.size_given else Size(int(rng.integers(3))),
                    flip=true_p.flip if d.flip_given else Flip(int(rng.integers(2))),
                )
                upserts.append(placed)
            canvas = apply_action(canvas, Action(upserts=tuple(upserts)), gallery)
            prev_reply = "ok"
            described.update(d.clipart for d in infos)
            omitted = [d.clipart for d in infos if not d.size_given]
            if omitted and rng.random() < config.cq_rate:
                q_targets = omitted[:2]
                question = cq.render_question(q_targets, gallery)
                answer, _, _ = cq.render_answer(q_targets, target, gallery)
                cq_targets = {cid: target.get(cid) for cid in q_targets}
                turns.append(TrainingTurn(f"{question} {answer}", canvas, cq_targets))
                fixed = tuple(target.get(cid) for cid in q_targets)
                canvas = apply_action(canvas, Action(upserts=fixed), gallery)
    return turns


def synthetic_ask_labels(scripts: list[TellerScript], seed: int,
                         p_ask_when_omitted: float = 0.49,
                         p_ask_otherwise: float = 0.10) -> dict[tuple[str, int], bool]:
    """Simulated human clarification decisions, keyed by (dialogue_id, turn_index).

    Mirrors the observed human inconsistency: underspecified instructions are
    clarified only about half the time, fully specified ones occasionally.
    """
    labels = {}
    for script in scripts:
        rng = np.random.default_rng([seed, hash_id(script.dialogue_id)])
        for t, omitted in enumerate(script.size_omitted_turns):
            p = p_ask_when_omitted if omitted else p_ask_otherwise
            labels[(script.dialogue_id, t)] = bool(rng.random() < p)
    return labels


# --- serialization --------------------------------------------------------------

def _uncertainty_to_dict(tu: TurnUncertainty) -> dict:
    return {
        "u_select_max": tu.u_select_max,
        "h_size_max": tu.h_size_max,
        "h_flip_max": tu.h_flip_max,
        "u_position_max": tu.u_position_max,
        "per_clipart": [
            {"clipart": c.clipart, "u_select": c.u_select, "h_size": c.h_size,
             "h_flip": c.h_flip, "u_position": c.u_position}
            for c in tu.per_clipart
        ],
    }


def transcript_to_jsonl(transcript: DialogueTranscript) -> str:
    """One line per turn plus a trailing summary line."""
    lines = []
    for t in transcript.turns:
        lines.append(json.dumps({
            "kind": "turn",
            "dialogue_id": transcript.dialogue_id,
            "turn_index": t.turn_index,
            "teller_text": t.teller_text,
            "drawer_reply": t.drawer_reply,
            "action": t.action.to_dict(),
            "cq": None if t.cq is None else {
                "question_text": t.cq.question_text,
                "answer_text": t.cq.answer_text,
                "targets": [[cid, None if size is None else size.label]
                            for cid, size in t.cq.targets],
                "fallback": t.cq.fallback,
            },
            "post_cq_action": None if t.post_cq_action is None else t.post_cq_action.to_dict(),
            "canvas_after": t.canvas_after.to_dict(),
            "uncertainty": _uncertainty_to_dict(t.uncertainty),
        }, sort_keys=True))
    lines.append(json.dumps({
        "kind": "summary",
        "dialogue_id": transcript.dialogue_id,
        "final_scene": transcript.final_scene.to_dict(),
        "target_scene": transcript.target_scene.to_dict(),
        "cq_count": transcript.cq_count,
    }, sort_keys=True))
    return "\n".join(lines) + "\n"


def render_text(transcript: DialogueTranscript, gallery: Gallery) -> str:
    """Human-readable dialogue log."""
    lines = [f"=== dialogue {transcript.dialogue_id} ==="]
    for t in transcript.turns:
        lines.append(f"T: {t.teller_text}")
        drawn = ", ".join(
            f"{gallery.name_of(p.clipart)}({p.size.label}@{p.x:.2f},{p.y:.2f})"
            for p in t.action.upserts)
        lines.append(f"D: [draws {drawn or 'nothing'}]")
        if t.cq is not None:
            lines.append(f"D: {t.cq.question_text}")
            lines.append(f"T: {t.cq.answer_text}")
            post = ", ".join(
                f"{gallery.name_of(p.clipart)}({p.size.label}@{p.x:.2f},{p.y:.2f})"
                for p in t.post_cq_action.upserts)
            lines.append(f"D: [draws {post or 'nothing'}]")
        lines.append(f"D: {t.drawer_reply}")
    return "\n".join(lines) + "\n"
