"""Command-line surface: simulate, ingest, train, evaluate, serve.

Every subcommand reads and writes only the documented formats (JSONL
event logs, JSONL action files, JSON vocabularies/profiles, ACF1
checkpoints, CSV metrics/grids, PPM images).  Usage errors exit 2; data
errors exit 1 with a one-line ``error: <kind>: <reason>`` on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

from . import corpus as corpus_io
from .config import ConfigError, load_config
from .events import MalformedLogError, read_sessions, write_log
from .field import AttractionTarget, pull_at
from .model import (
    TrainingConfig,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
    write_metrics_csv,
)
from .patches import ClickResolver, PatchDb, locate_on_screen, read_ppm, write_ppm
from .synth import (
    ProfileError,
    generate_session,
    load_profile,
    load_scenes,
    render_scene,
    scenes_resolver,
)
from .tokenizer import ActionVocabulary, tokenize_taken

_DATA_ERRORS = (
    MalformedLogError,
    ProfileError,
    ConfigError,
    FileNotFoundError,
    NotADirectoryError,
    IsADirectoryError,
    PermissionError,
    ValueError,
    KeyError,
    json.JSONDecodeError,
)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args) or 0
    except _DATA_ERRORS as exc:
        reason = str(exc) or repr(exc)
        print(f"error: {type(exc).__name__}: {reason}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="actioncast")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic event logs from a profile")
    p.add_argument("--profile", required=True, help="profile file or bundled profile name")
    p.add_argument("--length", type=int, required=True, help="actions per session")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sessions", type=int, default=1)
    p.add_argument("--out", required=True, help="event log JSONL to write")
    p.add_argument("--truth", help="optional ground-truth action labels JSONL")
    p.add_argument("--render-shots", action="store_true",
                   help="render scene screenshots and reference them from click events")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("ingest", help="tokenize an event log into an actions file")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", help="scenes/profile JSON for ground-truth click resolution")
    p.add_argument("--patch-db", help="patch database directory (vision resolution)")
    p.add_argument("--vision", action="store_true",
                   help="resolve clicks by patch matching on referenced screenshots")
    p.add_argument("--strict", action="store_true", help="reject logs with malformed lines")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("build-vocab", help="build the action vocabulary from actions files")
    p.add_argument("--actions", required=True, nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--min-clicks", type=int, default=ActionVocabulary.DEFAULT_MIN_CLICK_COUNT)
    p.add_argument("--patch-db", help="take click counts from this patch database")
    p.set_defaults(func=_cmd_build_vocab)

    p = sub.add_parser("train", help="train the forecaster")
    p.add_argument("--actions", required=True, nargs="+")
    p.add_argument("--val-actions", nargs="*", default=[])
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True, help="checkpoint file to write")
    p.add_argument("--metrics", help="per-epoch metrics CSV")
    p.add_argument("--cell", choices=["gru", "lstm"], default="gru")
    p.add_argument("--n-past", type=int, default=5)
    p.add_argument("--hidden", type=int, default=600)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timing", action="store_true",
                   help="emit wall-clock seconds in the metrics CSV (non-reproducible)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="top-1 accuracy of a checkpoint on an actions file")
    p.add_argument("--actions", required=True, nargs="+")
    p.add_argument("--vocab", required=True)
    p.add_argument("--model", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("render-profile", help="rasterize a profile's scenes to PPM + geometry")
    p.add_argument("--profile", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_render_profile)

    p = sub.add_parser("locate", help="find a stored patch on a screenshot")
    p.add_argument("--db", help="patch database directory")
    p.add_argument("--patch-id", type=int, help="patch id within --db")
    p.add_argument("--patch", help="PPM file to use as the template instead")
    p.add_argument("--screenshot", required=True, help="PPM screenshot")
    p.add_argument("--threshold", type=float, default=None)
    p.set_defaults(func=_cmd_locate)

    p = sub.add_parser("field-grid", help="sample the attraction field on a grid as CSV")
    p.add_argument("--targets", required=True, help="JSON list of {center, rect, confidence}")
    p.add_argument("--origin", default="0,0")
    p.add_argument("--nx", type=int, default=16)
    p.add_argument("--ny", type=int, default=12)
    p.add_argument("--step", type=float, default=40.0)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="service config for the field constants")
    p.set_defaults(func=_cmd_field_grid)

    p = sub.add_parser("serve", help="run the prediction HTTP service")
    p.add_argument("--config", help="flat key=value config file (ACF_CONFIG overrides)")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=_cmd_serve)

    return parser


def _cmd_simulate(args) -> int:
    profile = load_profile(args.profile)
    sessions = []
    truths = []
    for i in range(args.sessions):
        events, truth = generate_session(profile, args.length, args.seed + i)
        sessions.append(events)
        truths.append(truth)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.render_shots:
        sessions = _attach_shots(profile, sessions, out.parent)
    write_log(sessions, out)
    if args.truth:
        lines: list[str] = []
        for i, truth in enumerate(truths):
            if i:
                lines.append("")
            lines.extend(json.dumps({"action": a.label}) for a in truth)
        Path(args.truth).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def _attach_shots(profile, sessions, out_dir: Path):
    shots_dir = out_dir / "shots"
    shots_dir.mkdir(parents=True, exist_ok=True)
    refs: dict[str, str] = {}
    for app, scene in profile.scenes.items():
        screenshot, _ = render_scene(scene)
        ref = f"shots/{app}.ppm"
        write_ppm(screenshot, out_dir / ref)
        refs[app] = ref
    updated = []
    for session in sessions:
        rows = []
        for event in session:
            if event.kind in ("mouse_down", "mouse_up") and event.app_id in refs:
                event = dataclasses.replace(event, screenshot_ref=refs[event.app_id])
            rows.append(event)
        updated.append(rows)
    return updated


def _cmd_ingest(args) -> int:
    sessions = read_sessions(args.log, strict=args.strict)
    scenes = load_scenes(args.scenes) if args.scenes else {}
    resolver = None
    db = None
    if args.vision:
        if not args.patch_db or not scenes:
            raise ValueError("--vision needs both --patch-db and --scenes")
        db_dir = Path(args.patch_db)
        db = (
            PatchDb.load(db_dir)
            if (db_dir / "manifest.json").exists()
            else PatchDb()
        )
        log_dir = Path(args.log).resolve().parent

        def detector(_screenshot, event):
            scene = scenes.get(event.app_id)
            if scene is None:
                return []
            return scene.screen_boxes(window_at=event.window_rect[:2])

        resolver = ClickResolver(
            db=db,
            detector=detector,
            load_screenshot=lambda ref: read_ppm(log_dir / ref),
        )
    elif scenes:
        resolver = scenes_resolver(scenes)

    rows = [corpus_io.rows_from_taken(tokenize_taken(s, resolver)) for s in sessions]
    corpus_io.write_actions(rows, args.out)
    if db is not None:
        db.save(args.patch_db)
    print(f"ingested {sum(len(r) for r in rows)} actions in {len(rows)} sessions")
    return 0


def _read_all_actions(paths) -> list:
    sessions = []
    for path in paths:
        sessions.extend(corpus_io.read_actions(path))
    return sessions


def _cmd_build_vocab(args) -> int:
    sessions = _read_all_actions(args.actions)
    counts = None
    if args.patch_db:
        counts = PatchDb.load(args.patch_db).click_counts()
    vocab = corpus_io.vocabulary_from_rows(
        sessions, patch_click_counts=counts, min_click_count=args.min_clicks
    )
    Path(args.out).write_text(
        json.dumps(vocab.to_json(), indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"vocabulary size {vocab.size} ({vocab.n_apps} apps)")
    return 0


def _load_vocab(path: str) -> ActionVocabulary:
    return ActionVocabulary.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _cmd_train(args) -> int:
    vocab = _load_vocab(args.vocab)
    train_corpus = corpus_io.encode_rows(_read_all_actions(args.actions), vocab)
    val_corpus = None
    if args.val_actions:
        val_corpus = corpus_io.encode_rows(_read_all_actions(args.val_actions), vocab)
    config = TrainingConfig(
        cell=args.cell,
        n_past=args.n_past,
        hidden_size=args.hidden,
        num_layers=args.layers,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
    )
    t0 = time.monotonic()
    checkpoint, metrics = train(train_corpus, config, val_corpus)
    elapsed = time.monotonic() - t0
    save_checkpoint(checkpoint, args.out)
    if args.metrics:
        write_metrics_csv(metrics, args.metrics, timing=args.timing)
    best = max(m.val_accuracy for m in metrics)
    print(f"best_val_accuracy {best:.6f}")
    print(f"trained {len(metrics)} epochs in {elapsed:.1f}s", file=sys.stderr)
    return 0


def _cmd_eval(args) -> int:
    vocab = _load_vocab(args.vocab)
    checkpoint = load_checkpoint(args.model)
    corpus = corpus_io.encode_rows(_read_all_actions(args.actions), vocab)
    if corpus.vocab_hash != checkpoint.vocab_hash:
        raise ValueError("checkpoint was trained against a different vocabulary")
    accuracy, _records = evaluate(corpus, checkpoint)
    print(f"accuracy {accuracy:.6f}")
    return 0


def _cmd_render_profile(args) -> int:
    profile = load_profile(args.profile)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    geometry: dict = {}
    for app, scene in profile.scenes.items():
        screenshot, boxes = render_scene(scene)
        write_ppm(screenshot, out_dir / f"{app}.ppm")
        geometry[app] = [list(b.rect) for b in boxes]
    (out_dir / "scenes.json").write_text(
        json.dumps({"scenes": {a: s.to_json() for a, s in profile.scenes.items()}}, indent=1),
        encoding="utf-8",
    )
    (out_dir / "boxes.json").write_text(json.dumps(geometry, indent=1), encoding="utf-8")
    print(f"rendered {len(profile.scenes)} scenes to {out_dir}")
    return 0


def _cmd_locate(args) -> int:
    threshold = args.threshold
    if args.patch is not None:
        template = read_ppm(args.patch)
    elif args.db is not None and args.patch_id is not None:
        db = PatchDb.load(args.db)
        if args.patch_id not in db.entries:
            raise ValueError(f"no patch {args.patch_id} in {args.db}")
        template = db.entries[args.patch_id].patch
        if threshold is None:
            threshold = db.threshold
    else:
        raise ValueError("pass --patch FILE or both --db and --patch-id")
    if threshold is None:
        from .patches import DEFAULT_NCC_THRESHOLD

        threshold = DEFAULT_NCC_THRESHOLD
    screenshot = read_ppm(args.screenshot)
    t0 = time.monotonic()
    matches = locate_on_screen(template, screenshot, threshold)
    print(
        json.dumps(
            {
                "matches": [{"x": x, "y": y, "score": round(s, 6)} for x, y, s in matches],
                "elapsed_ms": round((time.monotonic() - t0) * 1000.0, 3),
            }
        )
    )
    return 0


def _cmd_field_grid(args) -> int:
    cfg = load_config(args.config).field_config()
    raw = json.loads(Path(args.targets).read_text(encoding="utf-8"))
    targets = [
        AttractionTarget(
            center=tuple(t["center"]), rect=tuple(t["rect"]), confidence=float(t["confidence"])
        )
        for t in raw
    ]
    ox, oy = (float(v) for v in args.origin.split(","))
    lines = ["x,y,dx,dy"]
    for j in range(args.ny):
        for i in range(args.nx):
            x, y = ox + i * args.step, oy + j * args.step
            dx, dy = pull_at((x, y), targets, cfg)
            lines.append(f"{x:.1f},{y:.1f},{dx:.9f},{dy:.9f}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {args.nx * args.ny} samples")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = load_config(args.config)
    if args.host:
        config.host = args.host
    if args.port:
        config.port = args.port
    uvicorn.run(create_app(config), host=config.host, port=config.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
