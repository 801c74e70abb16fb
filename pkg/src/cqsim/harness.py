"""Experiment harness: configs, seed management, canned experiments, report files.

Every experiment is reproducible bit-for-bit from (config, seed): reports
carry the config hash in a sidecar meta file, paired comparisons reuse the
same teller scripts and drawer weights across arms, and all randomness flows
through explicitly seeded generators.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import clarification as cq
from . import kernels
from .analysis import StudyConfig, StudyGridReport, study_grid
from .dialogue import (DialogueEngine, DialogueTranscript, RunSpec, SyntheticTellerConfig,
                       TellerScript, TrainingCorpusConfig, build_eval_scripts,
                       run_dialogue, synthetic_ask_labels, synthetic_training_turns)
from .drawer import (DrawerParams, Ensemble, TrainConfig, TrainingTurn, Vocabulary,
                     encode_canvas, encode_text, train, train_ensemble)
from .ingest import CorpusDialogue, join_annotations, parse_codraw, parse_icr
from .metrics import brier, ece, similarity_v2, size_accuracy, write_metrics_report
from .world import Gallery, Scene, SceneConfig, default_gallery

STUDY_EPOCHS = (1, 5, 10, 15)
STUDY_SEEDS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "table1"
    world: str = "synthetic"  # synthetic | replay
    seed: int = 0
    train_dialogues: int = 1200
    eval_dialogues: int = 200
    epochs: int = 15
    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    thetas: tuple[float, ...] = (0.3, 0.7, 1.1)
    rates: tuple[float, ...] = ()
    omit_size_p: float = 0.7
    omit_flip_p: float = 0.5
    cq_rate: float = 0.7
    min_cliparts: int = 4
    max_cliparts: int = 8
    label_entropy_threshold: float = 0.9
    label_noise: float = 0.3
    dedup_questions: bool = False
    bootstrap_resamples: int = 10000
    out: str = "out"
    corpus: str = ""
    annotations: str = ""
    corpus_format: str = "normalized"

    def teller_config(self) -> SyntheticTellerConfig:
        return SyntheticTellerConfig(omit_size_p=self.omit_size_p,
                                     omit_flip_p=self.omit_flip_p)

    def scene_config(self) -> SceneConfig:
        return SceneConfig(min_cliparts=self.min_cliparts, max_cliparts=self.max_cliparts)

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(lr=self.lr, momentum=self.momentum, epochs=self.epochs,
                           batch_size=self.batch_size,
                           seed=self.seed if seed is None else seed)


_TUPLE_FIELDS = {"thetas", "rates"}


def parse_config_text(text: str) -> dict[str, str]:
    """Flat `key = value` lines; '#' starts a comment."""
    mapping = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line {lineno} is not key=value: {raw_line!r}")
        mapping[key.strip()] = value.strip()
    return mapping


def config_from_mapping(mapping: dict[str, str],
                        base: ExperimentConfig = ExperimentConfig()) -> ExperimentConfig:
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    updates = {}
    for key, value in mapping.items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        current = getattr(base, key)
        if key in _TUPLE_FIELDS:
            updates[key] = tuple(float(v) for v in value.split(",") if v.strip() != "")
        elif isinstance(current, bool):
            updates[key] = value.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            updates[key] = int(value)
        elif isinstance(current, float):
            updates[key] = float(value)
        else:
            updates[key] = value
    return replace(base, **updates)


def canonical_config_text(config: ExperimentConfig) -> str:
    lines = []
    for f in sorted(fields(ExperimentConfig), key=lambda f: f.name):
        if f.name == "out":  # where a report lands is not part of what it reports
            continue
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(repr(v) for v in value)
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_config_text(config).encode("utf-8")).hexdigest()


# --- statistics helpers ---------------------------------------------------------

def paired_bootstrap_p(deltas: np.ndarray, resamples: int = 10000, seed: int = 0) -> float:
    """One-sided p for mean(delta) > 0: fraction of bootstrap means <= 0."""
    deltas = np.asarray(deltas, dtype=np.float64)
    n = len(deltas)
    if n == 0:
        return float("nan")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(resamples, n))
    means = deltas[idx].mean(axis=1)
    return float((means <= 0.0).mean())


def paired_t_test(deltas: np.ndarray) -> tuple[float, float]:
    """t statistic and a normal-approximation two-sided p (fine at n >= 100)."""
    deltas = np.asarray(deltas, dtype=np.float64)
    n = len(deltas)
    if n < 2:
        return float("nan"), float("nan")
    sd = deltas.std(ddof=1)
    if sd == 0.0:
        return 0.0, 1.0
    t = float(deltas.mean() / (sd / math.sqrt(n)))
    p = math.erfc(abs(t) / math.sqrt(2.0))
    return t, p


# --- workbench -------------------------------------------------------------------

def decision_features(params: DrawerParams, input_text: str, canvas: Scene,
                      gallery: Gallery) -> np.ndarray:
    tokens = params.vocab.encode(input_text)
    return np.concatenate([encode_text(params, tokens), encode_canvas(canvas, gallery)])


def collect_decision_rows(params: DrawerParams, scripts: list[TellerScript],
                          gallery: Gallery) -> list[tuple[str, int, np.ndarray]]:
    """Per-turn decider features from a silent replay (state before each action)."""
    rows = []
    for script in scripts:
        engine = DialogueEngine(script.dialogue_id, params, cq.SILENT, gallery)
        for t, text in enumerate(script.instructions):
            input_text = f"{engine.prev_reply} {text}".strip()
            rows.append((script.dialogue_id, t,
                         decision_features(params, input_text, engine.canvas, gallery)))
            engine.observe_instruction(text)
    return rows


def corpus_training_turns(corpus: list[CorpusDialogue], gallery: Gallery) -> list[TrainingTurn]:
    """Supervised turns from corpus replays; targets cover added *and* modified cliparts."""
    turns = []
    for d in corpus:
        canvas = Scene()
        prev_drawer = ""
        for t in d.turns:
            targets = {}
            for cid, placement in t.canvas_after.placements.items():
                if canvas.get(cid) != placement:
                    targets[cid] = placement
            input_text = f"{prev_drawer} {t.teller_text}".strip()
            turns.append(TrainingTurn(input_text, canvas, targets))
            canvas = t.canvas_after
            prev_drawer = t.drawer_text
    return turns


@dataclass
class Workbench:
    config: ExperimentConfig
    gallery: Gallery
    vocab: Vocabulary
    params: DrawerParams
    scripts: list[TellerScript]
    human_positions: frozenset[tuple[str, int]]
    decider: cq.DeciderParams | None


def build_workbench(config: ExperimentConfig, gallery: Gallery | None = None,
                    train_decider_model: bool = True) -> Workbench:
    gallery = gallery or default_gallery()
    corpus_cfg = TrainingCorpusConfig(teller=config.teller_config(),
                                      scene=config.scene_config(), cq_rate=config.cq_rate)
    if config.world == "replay":
        corpus = parse_codraw(Path(config.corpus).read_bytes(), gallery,
                              format=config.corpus_format)
        train_turns = corpus_training_turns(corpus, gallery)
        scripts = [TellerScript(d.dialogue_id, [t.teller_text for t in d.turns], d.target)
                   for d in corpus[:config.eval_dialogues]]
        asked = {}
        if config.annotations:
            records = parse_icr(Path(config.annotations).read_bytes())
            joined = join_annotations(corpus, records)
            asked = {key: rec.is_cq for key, rec in joined.by_key.items()}
        human_positions = frozenset(key for key, is_cq in asked.items() if is_cq)
    else:
        train_turns = synthetic_training_turns(config.train_dialogues, gallery,
                                               seed=config.seed, config=corpus_cfg)
        scripts = build_eval_scripts(config.eval_dialogues, gallery, seed=config.seed + 1,
                                     teller_config=config.teller_config(),
                                     scene_config=config.scene_config())
        labels = synthetic_ask_labels(scripts, seed=config.seed + 2)
        human_positions = frozenset(key for key, asked_flag in labels.items() if asked_flag)

    vocab = Vocabulary.from_texts([t.input_text for t in train_turns])
    result = train(train_turns, vocab, gallery, config.train_config())
    params = result.params

    decider = None
    if train_decider_model:
        if config.world == "replay":
            # train on corpus dialogues beyond the evaluation slice when there are any
            extra = corpus[config.eval_dialogues:2 * config.eval_dialogues]
            decider_corpus = extra if extra else corpus[:config.eval_dialogues]
            decider_scripts = [
                TellerScript(d.dialogue_id, [t.teller_text for t in d.turns], d.target)
                for d in decider_corpus]
            decider_labels = {(s.dialogue_id, t): ((s.dialogue_id, t) in human_positions)
                              for s in decider_scripts for t in range(len(s.instructions))}
        else:
            decider_scripts = build_eval_scripts(
                config.train_dialogues, gallery, seed=config.seed + 3,
                teller_config=config.teller_config(), scene_config=config.scene_config())
            decider_labels = synthetic_ask_labels(decider_scripts, seed=config.seed + 4)
        rows = collect_decision_rows(params, decider_scripts, gallery)
        samples = [(feats, bool(decider_labels.get((did, t), False)))
                   for did, t, feats in rows]
        decider = cq.train_decider(samples, seed=config.seed)
    return Workbench(config=config, gallery=gallery, vocab=vocab, params=params,
                     scripts=scripts, human_positions=human_positions, decider=decider)


def run_arm(bench: Workbench, policy: cq.ClarificationPolicy,
            want_position: bool = False,
            ensemble: Ensemble | None = None) -> list[DialogueTranscript]:
    return [
        run_dialogue(RunSpec(script=script, params=bench.params, policy=policy,
                             gallery=bench.gallery, ensemble=ensemble,
                             want_position=want_position,
                             policy_seed=bench.config.seed,
                             dedup_questions=bench.config.dedup_questions))
        for script in bench.scripts
    ]


@dataclass
class ArmMetrics:
    size_acc: float
    ss_mean: float
    ss_by_dialogue: dict[str, float]
    size_pairs_by_dialogue: dict[str, list]
    cq_counts: dict[str, int]
    calibration: dict[str, tuple[list, list]]

    @property
    def avg_questions(self) -> float:
        return float(np.mean(list(self.cq_counts.values())))


def arm_metrics(transcripts: list[DialogueTranscript], gallery: Gallery) -> ArmMetrics:
    ss_by_dialogue = {}
    pairs_by_dialogue = {}
    cq_counts = {}
    calibration = {}
    for tr in transcripts:
        ss_by_dialogue[tr.dialogue_id] = similarity_v2(tr.target_scene, tr.final_scene, gallery).total
        pairs_by_dialogue[tr.dialogue_id] = tr.size_pairs()
        cq_counts[tr.dialogue_id] = tr.cq_count
        calibration[tr.dialogue_id] = tr.calibration_rows()
    all_pairs = [p for pairs in pairs_by_dialogue.values() for p in pairs]
    return ArmMetrics(
        size_acc=size_accuracy(all_pairs) if all_pairs else float("nan"),
        ss_mean=float(np.mean(list(ss_by_dialogue.values()))),
        ss_by_dialogue=ss_by_dialogue,
        size_pairs_by_dialogue=pairs_by_dialogue,
        cq_counts=cq_counts,
        calibration=calibration,
    )


def _subset_size_acc(metrics: ArmMetrics, ids: list[str]) -> float:
    pairs = [p for d in ids for p in metrics.size_pairs_by_dialogue[d]]
    return size_accuracy(pairs) if pairs else float("nan")


def pooled_calibration(metrics: ArmMetrics, ids: list[str] | None = None) -> tuple[np.ndarray, np.ndarray]:
    ids = ids if ids is not None else sorted(metrics.calibration)
    probs, labels = [], []
    for d in ids:
        p, l = metrics.calibration[d]
        probs.extend(p)
        labels.extend(l)
    return np.array(probs), np.array(labels, dtype=np.int64)


# --- report writing ---------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return "--"
    if isinstance(value, float):
        if math.isnan(value):
            return "--"
        return f"{value:.6g}"
    return str(value)


def write_table(out_dir: Path, name: str, header: list[str], rows: list[list],
                config: ExperimentConfig) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_lines = [",".join(header)]
    csv_lines += [",".join(_fmt(v) for v in row) for row in rows]
    (out_dir / f"{name}.csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
    md_lines = ["| " + " | ".join(header) + " |",
                "| " + " | ".join("---" for _ in header) + " |"]
    md_lines += ["| " + " | ".join(_fmt(v) for v in row) + " |" for row in rows]
    md_lines.append("")
    md_lines.append(f"config hash: `{config_hash(config)}`")
    (out_dir / f"{name}.md").write_text("\n".join(md_lines) + "\n", encoding="utf-8")
    meta = {"config_hash": config_hash(config), "backend": kernels.BACKEND,
            "seed": config.seed, "experiment": config.experiment}
    if config.world == "replay":
        meta["note"] = ("replay mode inserts machine clarification exchanges while the "
                        "human teller messages are replayed verbatim; later turns may "
                        "react to a canvas the original teller never saw")
    (out_dir / f"{name}.meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- experiments -------------------------------------------------------------------

def exp_table1(config: ExperimentConfig, bench: Workbench | None = None) -> dict:
    """Silent vs human-position vs decider vs threshold arms, with paired CQ boosts."""
    bench = bench or build_workbench(config)
    silent_metrics = arm_metrics(run_arm(bench, cq.SILENT), bench.gallery)
    arms: list[tuple[str, cq.ClarificationPolicy]] = [
        ("human", cq.HumanPositionsPolicy(positions=bench.human_positions)),
    ]
    if bench.decider is not None:
        arms.append(("decider", cq.DeciderPolicy(params=bench.decider)))
    for theta in config.thetas:
        arms.append((f"theta={theta:g}", cq.ThresholdPolicy(theta=theta)))

    rows = [["silent", silent_metrics.size_acc, silent_metrics.ss_mean, None, None]]
    significance = []
    for arm_name, policy in arms:
        metrics = arm_metrics(run_arm(bench, policy), bench.gallery)
        cq_ids = sorted(d for d, c in metrics.cq_counts.items() if c > 0)
        if cq_ids:
            boost_size = _subset_size_acc(metrics, cq_ids) - _subset_size_acc(silent_metrics, cq_ids)
            ss_deltas = np.array([metrics.ss_by_dialogue[d] - silent_metrics.ss_by_dialogue[d]
                                  for d in cq_ids])
            boost_ss = float(ss_deltas.mean())
            p_boot = paired_bootstrap_p(ss_deltas, resamples=config.bootstrap_resamples,
                                        seed=config.seed)
            t_stat, p_t = paired_t_test(ss_deltas)
        else:
            boost_size = boost_ss = float("nan")
            p_boot = p_t = float("nan")
            t_stat = float("nan")
        rows.append([arm_name, metrics.size_acc, metrics.ss_mean, boost_size, boost_ss])
        all_deltas = np.array([metrics.ss_by_dialogue[d] - silent_metrics.ss_by_dialogue[d]
                               for d in sorted(metrics.ss_by_dialogue)])
        t_all, p_all = paired_t_test(all_deltas)
        significance.append([arm_name, len(cq_ids), p_boot, t_stat, p_t, t_all, p_all])

    out_dir = Path(config.out)
    write_table(out_dir, "table1",
                ["when_to_ask", "size_acc", "ss", "cq_size_acc_boost", "cq_ss_boost"],
                rows, config)
    write_table(out_dir, "table1_significance",
                ["when_to_ask", "n_cq_dialogues", "boost_ss_bootstrap_p",
                 "boost_ss_t", "boost_ss_t_p", "ss_vs_silent_t", "ss_vs_silent_t_p"],
                significance, config)
    return {"rows": rows, "significance": significance}


def exp_table2(config: ExperimentConfig, bench: Workbench | None = None) -> dict:
    """Per-theta question volume: % dialogues with >= 1 CQ and mean CQs in that subset."""
    bench = bench or build_workbench(config, train_decider_model=False)
    rows = []
    for theta in config.thetas:
        metrics = arm_metrics(run_arm(bench, cq.ThresholdPolicy(theta=theta)), bench.gallery)
        counts = list(metrics.cq_counts.values())
        with_cq = [c for c in counts if c > 0]
        pct = 100.0 * len(with_cq) / len(counts)
        mean_cqs = float(np.mean(with_cq)) if with_cq else None
        rows.append([f"{theta:g}", pct, mean_cqs])
    write_table(Path(config.out), "table2",
                ["theta", "pct_dialogues_with_cq", "avg_cqs_per_cq_dialogue"], rows, config)
    return {"rows": rows}


def exp_figure4(config: ExperimentConfig, bench: Workbench | None = None) -> dict:
    """Question budget vs size accuracy for threshold, random, and decider policies."""
    bench = bench or build_workbench(config)
    points = []
    threshold_budgets = []
    for theta in config.thetas:
        metrics = arm_metrics(run_arm(bench, cq.ThresholdPolicy(theta=theta)), bench.gallery)
        points.append(["threshold", metrics.avg_questions, metrics.size_acc, metrics.ss_mean])
        threshold_budgets.append(metrics.avg_questions)
    mean_turns = float(np.mean([len(s.instructions) for s in bench.scripts]))
    if config.rates:
        for rate in config.rates:
            metrics = arm_metrics(run_arm(bench, cq.RandomPolicy(rate=rate)), bench.gallery)
            points.append(["random", metrics.avg_questions, metrics.size_acc, metrics.ss_mean])
    else:
        # calibrate each rate so the random budget matches the threshold budget
        for target in threshold_budgets:
            rate = min(1.0, target / mean_turns) if mean_turns > 0 else 0.0
            metrics = arm_metrics(run_arm(bench, cq.RandomPolicy(rate=rate)), bench.gallery)
            if metrics.avg_questions > 0 and abs(metrics.avg_questions - target) > 0.1:
                rate = min(1.0, rate * target / metrics.avg_questions)
                metrics = arm_metrics(run_arm(bench, cq.RandomPolicy(rate=rate)), bench.gallery)
            points.append(["random", metrics.avg_questions, metrics.size_acc, metrics.ss_mean])
    if bench.decider is not None:
        metrics = arm_metrics(run_arm(bench, cq.DeciderPolicy(params=bench.decider)),
                              bench.gallery)
        points.append(["decider", metrics.avg_questions, metrics.size_acc, metrics.ss_mean])
    write_table(Path(config.out), "figure4",
                ["policy", "budget", "size_accuracy", "ss"], points, config)
    return {"points": points}


def exp_calibration(config: ExperimentConfig, bench: Workbench | None = None) -> dict:
    """ECE/Brier of the silent drawer vs the questioning drawer on identical dialogues."""
    bench = bench or build_workbench(config, train_decider_model=False)
    theta = config.thetas[0] if config.thetas else 0.3
    silent_metrics = arm_metrics(run_arm(bench, cq.SILENT), bench.gallery)
    q_metrics = arm_metrics(run_arm(bench, cq.ThresholdPolicy(theta=theta)), bench.gallery)
    ids = sorted(silent_metrics.calibration)
    ps, ls = pooled_calibration(silent_metrics, ids)
    pq, lq = pooled_calibration(q_metrics, ids)
    results = {
        "ece_silent": ece(ps, ls), "ece_qdrawer": ece(pq, lq),
        "brier_silent": brier(ps, ls), "brier_qdrawer": brier(pq, lq),
    }
    rng = np.random.default_rng(config.seed)
    n = len(ids)
    deltas_ece, deltas_brier = [], []
    for _ in range(min(config.bootstrap_resamples, 2000)):
        sample = [ids[i] for i in rng.integers(0, n, size=n)]
        ps_b, ls_b = pooled_calibration(silent_metrics, sample)
        pq_b, lq_b = pooled_calibration(q_metrics, sample)
        deltas_ece.append(ece(ps_b, ls_b) - ece(pq_b, lq_b))
        deltas_brier.append(brier(ps_b, ls_b) - brier(pq_b, lq_b))
    results["ece_improvement_p"] = float((np.array(deltas_ece) <= 0.0).mean())
    results["brier_improvement_p"] = float((np.array(deltas_brier) <= 0.0).mean())
    rows = [
        ["ece", results["ece_silent"], results["ece_qdrawer"], results["ece_improvement_p"]],
        ["brier", results["brier_silent"], results["brier_qdrawer"], results["brier_improvement_p"]],
    ]
    out_dir = Path(config.out)
    write_table(out_dir, "calibration",
                ["metric", "silent", f"qdrawer_theta={theta:g}", "improvement_bootstrap_p"],
                rows, config)
    write_metrics_report(out_dir / "calibration_metrics", results)
    return results


def exp_study(config: ExperimentConfig, gallery: Gallery | None = None) -> StudyGridReport:
    """The uncertainty-vs-asking study grid over seeds x checkpoint epochs."""
    gallery = gallery or default_gallery()
    corpus_cfg = TrainingCorpusConfig(teller=config.teller_config(),
                                      scene=config.scene_config(), cq_rate=config.cq_rate)
    epochs = tuple(e for e in STUDY_EPOCHS if e <= config.epochs) or (config.epochs,)
    if config.world == "replay":
        corpus = parse_codraw(Path(config.corpus).read_bytes(), gallery,
                              format=config.corpus_format)
        train_turns = corpus_training_turns(corpus, gallery)
        scripts = [TellerScript(d.dialogue_id, [t.teller_text for t in d.turns], d.target)
                   for d in corpus[:config.eval_dialogues]]
        records = parse_icr(Path(config.annotations).read_bytes())
        joined = join_annotations(corpus, records)
        asked = {key: rec.is_cq for key, rec in joined.by_key.items()}
    else:
        train_turns = synthetic_training_turns(config.train_dialogues, gallery,
                                               seed=config.seed, config=corpus_cfg)
        scripts = build_eval_scripts(config.eval_dialogues, gallery, seed=config.seed + 1,
                                     teller_config=config.teller_config(),
                                     scene_config=config.scene_config())
        asked = None  # synthetic labels derived from reference-model entropy below
    vocab = Vocabulary.from_texts([t.input_text for t in train_turns])
    _, results = train_ensemble(train_turns, vocab, gallery,
                                config.train_config(), seeds=STUDY_SEEDS,
                                checkpoint_epochs=epochs)
    checkpoints = {seed: results[seed].checkpoints for seed in STUDY_SEEDS}

    from .analysis import extract_feature_rows
    from .uncertainty import write_uncertainty_rows

    reference_rows, _ = extract_feature_rows(
        checkpoints[0][epochs[-1]],
        Ensemble([checkpoints[s][epochs[-1]] for s in STUDY_SEEDS]),
        scripts, gallery)
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "uncertainty_rows.csv").write_text(write_uncertainty_rows([
        {"dialogue_id": r.dialogue_id, "turn_index": r.turn_index,
         "u_select": r.u_select, "h_size": r.h_size, "h_flip": r.h_flip,
         "u_position": r.u_position}
        for r in reference_rows
    ]), encoding="utf-8")
    if asked is None:
        asked = entropy_labels_from_rows(reference_rows,
                                         threshold=config.label_entropy_threshold,
                                         noise=config.label_noise,
                                         seed=config.seed + 9)
    report = study_grid(checkpoints, scripts, asked, gallery,
                        StudyConfig(seed=config.seed))
    _write_study_report(config, report)
    return report


def entropy_labels_from_rows(rows, threshold: float, noise: float,
                             seed: int) -> dict[tuple[str, int], bool]:
    """Ask-labels thresholded on a reference model's size entropy, with label noise.

    Labels land on turn t+1 so that the study's follow-up-turn convention maps
    them back to the features of turn t.
    """
    rng = np.random.default_rng(seed)
    labels = {}
    for row in rows:
        label = row.h_size > threshold
        if rng.random() < noise:
            label = not label
        labels[(row.dialogue_id, row.turn_index + 1)] = bool(label)
    return labels


def _write_study_report(config: ExperimentConfig, report: StudyGridReport) -> None:
    out_dir = Path(config.out)
    cell_rows = [[c.seed, c.epoch, c.ap, c.ap_baseline, c.p_value, c.f1, c.similarity,
                  c.prevalence, c.n_train, c.n_eval, "|".join(c.dropped_features), c.note]
                 for c in report.cells]
    write_table(out_dir, "study_grid",
                ["seed", "epoch", "ap", "ap_random_baseline", "p_value", "f1",
                 "similarity", "prevalence", "n_train", "n_eval", "dropped_features", "note"],
                cell_rows, config)
    coef_rows = []
    for c in report.cells:
        for name, triple in c.coefficients.items():
            if triple is None:
                coef_rows.append([c.seed, c.epoch, name, None, None, None])
            else:
                coef_rows.append([c.seed, c.epoch, name, triple[0], triple[1], triple[2]])
    write_table(out_dir, "study_coefficients",
                ["seed", "epoch", "uncertainty_feature", "coefficient", "ci_low", "ci_high"],
                coef_rows, config)
    series_rows = [[s["epoch"], s["ap"], s["ap_baseline"], s["f1"], s["similarity"],
                    s["mean_u_select"], s["mean_h_size"], s["mean_h_flip"], s["mean_u_position"]]
                   for s in report.epoch_series()]
    write_table(out_dir, "study_epoch_series",
                ["epoch", "ap", "ap_random_baseline", "f1", "similarity",
                 "mean_u_select", "mean_h_size", "mean_h_flip", "mean_u_position"],
                series_rows, config)


EXPERIMENTS = {
    "table1": exp_table1,
    "table2": exp_table2,
    "figure4": exp_figure4,
    "calibration": exp_calibration,
    "study": exp_study,
}


def run_experiment(name: str, config: ExperimentConfig):
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    config = replace(config, experiment=name)
    return EXPERIMENTS[name](config)
