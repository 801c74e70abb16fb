"""Command-line interface: train, simulate, exp <name>, analyze, ingest, serve."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import clarification as cq
from .analysis import ClusterInput, cluster_analysis
from .dialogue import (RunSpec, TrainingCorpusConfig, build_eval_scripts, render_text,
                       run_dialogue, synthetic_ask_labels, synthetic_training_turns,
                       transcript_to_jsonl)
from .drawer import Vocabulary, load_params, save_params, train
from .harness import (ExperimentConfig, config_from_mapping, corpus_training_turns,
                      parse_config_text, run_experiment, write_table)
from .ingest import corpus_stats, join_annotations, parse_codraw, parse_icr, serialize_corpus
from .world import default_gallery


def _add_world_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--omit-size-p", type=float, default=0.7)
    p.add_argument("--omit-flip-p", type=float, default=0.5)
    p.add_argument("--cq-rate", type=float, default=0.7)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cqsim",
                                     description="scene-drawing dialogue simulator with "
                                                 "uncertainty-driven clarification questions")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train drawer weights")
    p.add_argument("--dialogues", type=int, default=300)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corpus", help="train on a real corpus instead of the synthetic world")
    p.add_argument("--format", choices=["official", "normalized"], default="normalized")
    p.add_argument("--out", required=True, help="weight file to write")
    _add_world_flags(p)

    p = sub.add_parser("simulate", help="run scripted dialogues with a policy")
    p.add_argument("--weights", required=True)
    p.add_argument("--policy", default="threshold:0.7",
                   help="threshold:θ | random:rate | human | decider:<file> | silent")
    p.add_argument("--dialogues", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--render", choices=["jsonl", "text"], default="jsonl")
    p.add_argument("--dedup-questions", action="store_true",
                   help="never re-ask about a clipart within one dialogue")
    _add_world_flags(p)

    p = sub.add_parser("exp", help="run a canned experiment")
    p.add_argument("name", choices=["table1", "table2", "figure4", "calibration", "study"])
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("analyze", help="keyword-cluster analysis of first-turn instructions")
    p.add_argument("--corpus", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--format", choices=["official", "normalized"], default="normalized")
    p.add_argument("--lexicon-dir", help="directory with clipart_names/size_words/location_words .txt")
    p.add_argument("--out", default="out")

    p = sub.add_parser("ingest", help="validate a corpus and write the normalized JSONL")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["official", "normalized"], default="official")
    p.add_argument("--annotations")
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="start the playground HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--weights")
    p.add_argument("--static")
    return parser


def _cmd_train(args) -> int:
    gallery = default_gallery()
    cfg = ExperimentConfig(epochs=args.epochs, lr=args.lr, momentum=args.momentum,
                           batch_size=args.batch_size, seed=args.seed,
                           train_dialogues=args.dialogues,
                           omit_size_p=args.omit_size_p, omit_flip_p=args.omit_flip_p,
                           cq_rate=args.cq_rate)
    if args.corpus:
        corpus = parse_codraw(Path(args.corpus).read_bytes(), gallery, format=args.format)
        turns = corpus_training_turns(corpus, gallery)
    else:
        turns = synthetic_training_turns(
            args.dialogues, gallery, seed=args.seed,
            config=TrainingCorpusConfig(teller=cfg.teller_config(), cq_rate=args.cq_rate))
    vocab = Vocabulary.from_texts([t.input_text for t in turns])
    result = train(turns, vocab, gallery, cfg.train_config())
    Path(args.out).write_bytes(save_params(result.params))
    print(f"trained on {len(turns)} turns; final epoch loss {result.epoch_losses[-1]:.4f}; "
          f"weights -> {args.out}")
    return 0


def _cmd_simulate(args) -> int:
    gallery = default_gallery()
    params = load_params(Path(args.weights).read_bytes(), gallery)
    teller_cfg = ExperimentConfig(omit_size_p=args.omit_size_p,
                                  omit_flip_p=args.omit_flip_p).teller_config()
    scripts = build_eval_scripts(args.dialogues, gallery, seed=args.seed,
                                 teller_config=teller_cfg)
    positions = frozenset(k for k, v in synthetic_ask_labels(scripts, seed=args.seed + 2).items() if v)
    policy = cq.parse_policy_spec(args.policy, human_positions=positions)
    chunks = []
    for script in scripts:
        transcript = run_dialogue(RunSpec(script=script, params=params, policy=policy,
                                          gallery=gallery, policy_seed=args.seed,
                                          dedup_questions=args.dedup_questions))
        chunks.append(render_text(transcript, gallery) if args.render == "text"
                      else transcript_to_jsonl(transcript))
    Path(args.out).write_text("".join(chunks), encoding="utf-8")
    print(f"wrote {len(scripts)} dialogues -> {args.out}")
    return 0


def _cmd_exp(args) -> int:
    mapping = {}
    if args.config:
        mapping.update(parse_config_text(Path(args.config).read_text(encoding="utf-8")))
    for override in args.set:
        key, sep, value = override.partition("=")
        if not sep:
            raise SystemExit(f"--set expects KEY=VALUE, got {override!r}")
        mapping[key.strip()] = value.strip()
    if args.seed is not None:
        mapping["seed"] = str(args.seed)
    if args.out is not None:
        mapping["out"] = args.out
    config = config_from_mapping(mapping)
    run_experiment(args.name, config)
    print(f"experiment {args.name} written to {config.out}")
    return 0


def _load_lexicon(directory: Path | None, name: str, fallback: list[str]) -> list[str]:
    if directory is not None:
        path = directory / f"{name}.txt"
        return [line.strip() for line in path.read_text(encoding="utf-8").splitlines()
                if line.strip()]
    from importlib import resources
    res = resources.files("cqsim").joinpath(f"data/lexicons/{name}.txt")
    if res.is_file():
        return [line.strip() for line in res.read_text(encoding="utf-8").splitlines()
                if line.strip()]
    return fallback


def _cmd_analyze(args) -> int:
    gallery = default_gallery()
    corpus = parse_codraw(Path(args.corpus).read_bytes(), gallery, format=args.format)
    records = parse_icr(Path(args.annotations).read_bytes())
    joined = join_annotations(corpus, records)
    lex_dir = Path(args.lexicon_dir) if args.lexicon_dir else None
    clipart_lex = _load_lexicon(lex_dir, "clipart_names", gallery.names)
    size_lex = _load_lexicon(lex_dir, "size_words", ["small", "medium", "large"])
    loc_lex = _load_lexicon(lex_dir, "location_words", ["left", "right", "top", "bottom"])
    inputs = []
    for d in corpus:
        record = joined.by_key.get((d.dialogue_id, 1))
        inputs.append(ClusterInput(
            dialogue_id=d.dialogue_id,
            text=d.turns[0].teller_text,
            followed_by_cq=bool(record and record.is_cq),
            cq_attributes=record.attributes if record else frozenset(),
        ))
    rows = cluster_analysis(inputs, clipart_lex, size_lex, loc_lex)
    table = [[r.name, r.n_utterances, r.pct_cq,
              "|".join(f"{tag}:{share:.3f}" for tag, share in r.attribute_share.items())]
             for r in rows]
    write_table(Path(args.out), "clusters",
                ["cluster", "n_utterances", "pct_cq", "cq_attribute_share"],
                table, ExperimentConfig(experiment="clusters", out=args.out))
    print(f"cluster table written to {args.out} (orphaned annotations: {joined.orphan_count})")
    return 0


def _cmd_ingest(args) -> int:
    gallery = default_gallery()
    corpus = parse_codraw(Path(args.input).read_bytes(), gallery, format=args.format)
    Path(args.out).write_bytes(serialize_corpus(corpus))
    records = None
    orphans = 0
    if args.annotations:
        records = parse_icr(Path(args.annotations).read_bytes())
        orphans = join_annotations(corpus, records).orphan_count
    stats = corpus_stats(corpus, records)
    print(f"dialogues: {stats.n_dialogues}")
    print(f"utterances: {stats.n_utterances}")
    print(f"mean turns/dialogue: {stats.mean_turns:.2f}")
    if records is not None:
        print(f"dialogues with >=1 CQ: {100 * stats.frac_dialogues_with_cq:.1f}%")
        print(f"mean CQs per CQ-dialogue: {stats.mean_cqs_per_cq_dialogue:.2f}")
        print(f"orphaned annotations: {orphans}")
    print(f"normalized corpus -> {args.out}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(weights_path=args.weights, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


COMMANDS = {
    "train": _cmd_train,
    "simulate": _cmd_simulate,
    "exp": _cmd_exp,
    "analyze": _cmd_analyze,
    "ingest": _cmd_ingest,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
