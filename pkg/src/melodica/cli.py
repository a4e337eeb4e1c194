"""Command-line entry points.

Subcommands: ``detect`` (WAV to hex melody), ``synth`` (hex melody to WAV),
``session`` (scripted therapy session to a JSONL log), ``affect``
(synthesize / train / evaluate the EDA classifiers), and ``serve`` (the
WebSocket session service).  Exit codes: 2 unreadable audio, 3 empty
signal, 4 session protocol violation, 5 unusable dataset.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from pathlib import Path

import numpy as np

EXIT_BAD_AUDIO = 2
EXIT_EMPTY_SIGNAL = 3
EXIT_PROTOCOL = 4
EXIT_BAD_DATA = 5


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="melodica",
                                     description="Simulated robot music-therapy platform")
    parser.add_argument("--config", help="engine config JSON (default: $MELODICA_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect notes in a WAV file")
    p.add_argument("--wav", required=True)
    p.add_argument("--channel", type=int, default=None)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("synth", help="synthesize a hex melody to WAV")
    p.add_argument("--melody", required=True)
    p.add_argument("--bpm", type=float, default=100.0)
    p.add_argument("--out", required=True)
    p.add_argument("--noise-rms", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("session", help="run a scripted therapy session")
    p.add_argument("--kind", required=True,
                   help="baseline | intervention:N | exit")
    p.add_argument("--participant", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--persona", choices=["perfect", "noisy", "silent"], default="perfect")
    p.add_argument("--song", default=None, help="participant song choice")
    p.add_argument("--out", required=True, help="JSONL log path")
    p.add_argument("--kinematic-imitation", action="store_true",
                   help="run game mode 3 through the simulated arms")
    p.set_defaults(func=cmd_session)

    p = sub.add_parser("replay", help="verify a session log replays identically")
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("affect", help="EDA emotion pipeline")
    affect_sub = p.add_subparsers(dest="affect_command", required=True)

    pa = affect_sub.add_parser("synth", help="write a synthetic EDA dataset")
    pa.add_argument("--data", required=True, help="output directory")
    pa.add_argument("--segments", type=int, default=40, help="conversations per class")
    pa.set_defaults(func=cmd_affect_synth)

    for name in ("train", "eval"):
        pa = affect_sub.add_parser(name)
        pa.add_argument("--data", required=True, help="directory of EDA CSV pairs")
        pa.add_argument("--kernel", choices=["linear", "poly", "rbf"], default=None)
        pa.add_argument("--k", type=int, choices=[1, 3, 5], default=None)
        pa.add_argument("--seed", type=int, default=0)
        pa.add_argument("--folds", type=int, default=5)
        if name == "train":
            pa.add_argument("--model-out", required=True)
            pa.set_defaults(func=cmd_affect_train)
        else:
            pa.set_defaults(func=cmd_affect_eval)

    p = sub.add_parser("serve", help="run the WebSocket session service")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--kind", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--song", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)
    return parser


# ---------------------------------------------------------------------------


def cmd_detect(args) -> int:
    from .audio import EmptySignal, MalformedHeader, UnsupportedEncoding, detect_notes, read_wav
    from .config import EngineConfig
    from .instrument import render_hex_melody

    cfg = EngineConfig.load(args.config)
    channel = args.channel if args.channel is not None else cfg.wav_channel
    try:
        clip = read_wav(args.wav, channel=channel)
    except (MalformedHeader, UnsupportedEncoding) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_AUDIO
    try:
        events = detect_notes(clip, cfg.detection)
    except EmptySignal as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY_SIGNAL
    print(render_hex_melody([n for n, _ in events]))
    return 0


def cmd_synth(args) -> int:
    from .audio import Timbre, synthesize_melody, write_wav
    from .instrument import InvalidDigit, parse_hex_melody

    try:
        melody = parse_hex_melody(args.melody, tempo_bpm=args.bpm)
    except (InvalidDigit, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY_SIGNAL
    clip = synthesize_melody(melody, Timbre(noise_rms=args.noise_rms, seed=args.seed))
    write_wav(args.out, clip)
    print(f"wrote {args.out} ({clip.duration_s:.2f}s)")
    return 0


def cmd_session(args) -> int:
    from .config import EngineConfig
    from .personas import PERSONAS, run_scripted_session
    from .session import IllegalEvent, UnknownSong, plan_session

    cfg = EngineConfig.load(args.config)
    try:
        plan = plan_session(args.kind, participant_song=args.song,
                            response_window_s=cfg.response_window_s)
    except (UnknownSong, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    imitator = None
    if args.kinematic_imitation:
        imitator = _build_imitator(cfg)
    persona = PERSONAS[args.persona](seed=args.seed)
    try:
        run = run_scripted_session(plan, seed=args.seed, persona=persona, imitator=imitator)
    except IllegalEvent as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    write_session_log(args.out, plan, args, run)
    tt = run.summary.get("turn_taking_pct")
    print(f"session complete: turn-taking {tt}%, log {args.out}")
    return 0


def _build_imitator(cfg):
    from .trajectory import Arm, KinematicChain, make_kinematic_imitator, strike_configs

    chains = {Arm.LEFT: KinematicChain.default(Arm.LEFT),
              Arm.RIGHT: KinematicChain.default(Arm.RIGHT)}
    table = strike_configs(cfg.instrument, chains, cfg.placement)
    return make_kinematic_imitator(cfg.instrument, chains, table, cfg.placement)


def write_session_log(path, plan, args, run) -> None:
    header = {
        "type": "session_header",
        "body": {
            "kind": args.kind,
            "participant": args.participant,
            "seed": args.seed,
            "persona": args.persona,
            "song": plan.song.name,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for record in run.log:
            fh.write(json.dumps(record.to_json_dict(), sort_keys=True) + "\n")


def cmd_replay(args) -> int:
    ok, detail = replay_session_log(args.log)
    if ok:
        print(f"replay ok: {detail}")
        return 0
    print(f"replay MISMATCH: {detail}", file=sys.stderr)
    return EXIT_PROTOCOL


def replay_session_log(path) -> tuple[bool, str]:
    """Feed a log's input events to a fresh engine; outputs must match."""
    from .session import EVENT_TYPES, SessionEngine, plan_session

    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    if header.get("type") != "session_header":
        return False, "missing session header"
    plan = plan_session(header["body"]["kind"],
                        participant_song=header["body"].get("song"))
    engine = SessionEngine(plan, seed=header["body"]["seed"])
    records = [json.loads(line) for line in lines[1:]]
    expected_out = [r for r in records if r["dir"] == "out"]
    produced = []
    for rec in records:
        if rec["dir"] != "in":
            continue
        cls = EVENT_TYPES[rec["type"]]
        event = cls(t_s=rec["t_s"], **rec["body"])
        for action in engine.advance(event):
            produced.append({"type": action.type, "body": action.body})
    if len(produced) != len(expected_out):
        return False, f"{len(produced)} actions produced vs {len(expected_out)} logged"
    for i, (got, want) in enumerate(zip(produced, expected_out)):
        want_norm = json.loads(json.dumps({"type": want["type"], "body": want["body"]}))
        got_norm = json.loads(json.dumps(got))
        if got_norm != want_norm:
            return False, f"action {i} differs: {got_norm} vs {want_norm}"
    return True, f"{len(produced)} actions reproduced"


# ---------------------------------------------------------------------------


def cmd_affect_synth(args) -> int:
    from .affect.data import DEFAULT_CLASS_PRESETS, synth_eda, write_eda_csv

    out = Path(args.data)
    out.mkdir(parents=True, exist_ok=True)
    for section, params in DEFAULT_CLASS_PRESETS.items():
        rec = synth_eda(params, duration_s=45.0 * args.segments, section=section)
        write_eda_csv(out / f"{section.lower()}.csv", rec,
                      out / f"{section.lower()}.annotations.csv")
    print(f"wrote {len(DEFAULT_CLASS_PRESETS)} recordings to {out}")
    return 0


def _load_affect_dataset(data_dir):
    from .affect import extract_features, read_eda_csv, segment_conversations

    data_dir = Path(data_dir)
    feats, labels = [], []
    for data_path in sorted(data_dir.glob("*.csv")):
        if data_path.name.endswith(".annotations.csv"):
            continue
        ann_path = data_path.with_name(data_path.stem + ".annotations.csv")
        if not ann_path.exists():
            continue
        recording = read_eda_csv(data_path, ann_path)
        for seg in segment_conversations(recording):
            fv = extract_features(seg.samples_us, segment_id=seg.segment_id, label=seg.label)
            feats.append(fv.values)
            labels.append(seg.label)
    return np.array(feats), labels


def _classifier_spec(args):
    from .affect import ClassifierSpec

    if args.k is not None:
        return ClassifierSpec(kind="knn", k=args.k)
    kernel = args.kernel if args.kernel is not None else "rbf"
    return ClassifierSpec(kind="svm", kernel=kernel)


def cmd_affect_train(args) -> int:
    from .affect import InsufficientClassMembers

    x, labels = _load_affect_dataset(args.data)
    if len(labels) == 0 or len(set(labels)) < 2:
        print("error: dataset has fewer than two classes", file=sys.stderr)
        return EXIT_BAD_DATA
    spec = _classifier_spec(args)
    try:
        model = spec.fit(x, labels)
    except InsufficientClassMembers as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_DATA
    model.save(args.model_out)
    print(f"trained {spec.describe()} on {len(labels)} segments "
          f"({len(set(labels))} classes) -> {args.model_out}")
    return 0


def cmd_affect_eval(args) -> int:
    from .affect import InsufficientClassMembers, evaluate

    x, labels = _load_affect_dataset(args.data)
    classes = sorted(set(labels))
    if len(labels) == 0 or len(classes) < 2:
        print("error: dataset has fewer than two classes", file=sys.stderr)
        return EXIT_BAD_DATA
    spec = _classifier_spec(args)
    labels_arr = np.array(labels)
    rows = []
    try:
        for a, b in itertools.combinations(classes, 2):
            sel = (labels_arr == a) | (labels_arr == b)
            res = evaluate(spec, x[sel], list(labels_arr[sel]), folds=args.folds,
                           seed=args.seed, positive_label=a)
            rows.append((f"{a} vs {b}", res))
        if len(classes) > 2:
            res = evaluate(spec, x, labels, folds=args.folds, seed=args.seed)
            rows.append((" vs ".join(classes), res))
    except InsufficientClassMembers as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_DATA

    print(f"classifier: {spec.describe()}   folds: {args.folds}   seed: {args.seed}")
    print(f"{'comparison':<20} {'Accuracy(%)':>12} {'AUC':>6} {'Precision(%)':>13} {'Recall(%)':>10}")
    for name, res in rows:
        r = res.row()
        auc = "-" if r["auc"] is None else f"{r['auc']:.2f}"
        prec = "-" if r["precision_pct"] is None else f"{r['precision_pct']:.1f}"
        rec = "-" if r["recall_pct"] is None else f"{r['recall_pct']:.1f}"
        print(f"{name:<20} {r['accuracy_pct']:>12.1f} {auc:>6} {prec:>13} {rec:>10}")
    return 0


# ---------------------------------------------------------------------------


def cmd_serve(args) -> int:
    import uvicorn

    from .config import EngineConfig
    from .service import create_app
    from .session import plan_session

    cfg = EngineConfig.load(args.config)
    plan = plan_session(args.kind, participant_song=args.song,
                        response_window_s=cfg.response_window_s)
    app = create_app(plan, seed=args.seed)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
