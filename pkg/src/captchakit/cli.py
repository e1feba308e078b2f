"""Command-line entry point.

Subcommands:

    gen              render a dataset from a scheme config
    metrics          six-metric group-protocol report over three image dirs
    mechanism-study  per-preset train/evaluate sweep over the 12 presets
    campaign         run an active-learning campaign from a config document
    serve-labeler    run a human-labeled campaign with the labeling UI served

Exit codes: 0 success, 2 config error, 3 remote/adapter error, 4 I/O error.
Every run prints a reproducibility header: tool version, resolved config
digest, and master seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__, store
from .adapters import AdapterError, HttpAdapter, StubAdapter, TaskQueue, make_label_validator
from .campaign import (
    Campaign,
    CampaignError,
    QueueLabeler,
    evaluate_predictions,
    parse_campaign_config,
)
from .render import RenderError, generate_dataset
from .schemes import SchemeError, preset, resolve_scheme

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ADAPTER = 3
EXIT_IO = 4


def _header(scheme_digest: str | None, seed: int | None) -> None:
    print(f"captchakit {__version__}")
    if scheme_digest is not None:
        print(f"config digest: {scheme_digest}")
    if seed is not None:
        print(f"master seed: {seed}")


def _load_dir_images(path: str) -> list:
    """All images of a dataset dir (or a bare directory of PNGs), sorted."""
    import numpy as np
    from PIL import Image

    try:
        manifest = store.read_manifest(path)
        return [manifest.load_image(e) for e in manifest.entries]
    except store.StoreError:
        pass
    images = []
    for name in sorted(os.listdir(path)):
        if name.lower().endswith(".png"):
            with Image.open(os.path.join(path, name)) as im:
                images.append(np.asarray(im.convert("RGB"), dtype=np.uint8))
    if not images:
        raise store.StoreError(f"no manifest and no .png files under {path}")
    return images


def cmd_gen(args) -> int:
    cfg = resolve_scheme(args.scheme)
    _header(cfg.digest(), args.seed)
    manifest = generate_dataset(cfg, args.count, args.seed, args.out)
    print(f"wrote {len(manifest.entries)} samples to {manifest.root}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    from .metrics import compare_populations, group_protocol_report

    _header(None, None)
    real = _load_dir_images(args.real)
    imitation = _load_dir_images(args.imitation)
    synthetic = _load_dir_images(args.synthetic)
    report = group_protocol_report(real, imitation, synthetic, groups=args.groups)
    os.makedirs(args.out, exist_ok=True)
    report_path = os.path.join(args.out, "metric-report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    wins = compare_populations(report)
    lines = ["synthetic-beats-imitation groups per metric:"]
    lines += [f"  {name:>6}: {wins[name]}/{len(report.groups)}" for name in sorted(wins)]
    summary = "\n".join(lines)
    with open(os.path.join(args.out, "metric-report.txt"), "w", encoding="utf-8") as fh:
        fh.write(summary + "\n")
    print(summary)
    print(f"report written to {report_path}")
    return EXIT_OK


def _make_adapter(spec: str, truth_manifests=(), confusion=(), seed: int = 0):
    if spec == "stub":
        truth = {}
        alphabet = ""
        for manifest in truth_manifests:
            for e in manifest.entries:
                if e.label is not None:
                    truth[e.digest] = e.label
        if truth_manifests:
            scheme_chars = sorted({c for label in truth.values() for c in label})
            alphabet = "".join(scheme_chars)
        return StubAdapter(truth, alphabet or "0", confusion_pairs=tuple(confusion), seed=seed)
    return HttpAdapter(spec)


def cmd_mechanism_study(args) -> int:
    presets = _parse_preset_list(args.presets)
    _header(None, args.seed)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for no in presets:
        cfg = preset(no)
        base = os.path.join(args.out, f"preset-{no:02d}")
        train_dir = os.path.join(base, "train")
        test_dir = os.path.join(base, "test")
        train_manifest = (
            store.read_manifest(train_dir)
            if os.path.isdir(train_dir)
            else generate_dataset(cfg, args.count, args.seed + no * 1000, train_dir)
        )
        test_manifest = (
            store.read_manifest(test_dir)
            if os.path.isdir(test_dir)
            else generate_dataset(cfg, args.test_count, args.seed + no * 1000 + 1, test_dir)
        )
        adapter = _make_adapter(args.adapter, truth_manifests=[test_manifest], seed=args.seed)
        hyper = {"max_epochs": args.epochs} if args.epochs else None
        summary = adapter.train(os.path.abspath(train_dir), hyper)
        pngs = [test_manifest.load_png_bytes(e) for e in test_manifest.entries]
        preds = [p.label for p in adapter.predict(pngs, model_id=summary.model_id)]
        truth = [e.label for e in test_manifest.entries]
        rate, _ = evaluate_predictions(preds, truth)
        on = sorted(k for k, v in cfg.mechanism_flags().items() if v)
        rows.append({
            "preset": no,
            "scheme_id": cfg.scheme_id,
            "mechanisms": on,
            "success_rate": rate,
            "epochs_run": summary.epochs_run,
        })
        print(f"preset {no:2d}: success {rate:.3f} mechanisms {','.join(on) or '-'}")
    doc = {"schema_version": 1, "seed": args.seed, "rows": rows}
    with open(os.path.join(args.out, "mechanism-study.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def _parse_preset_list(text: str) -> list[int]:
    out = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if "-" in chunk:
            lo, hi = chunk.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif chunk:
            out.append(int(chunk))
    bad = [n for n in out if not 1 <= n <= 12]
    if bad or not out:
        raise SchemeError("presets", f"preset numbers must be in [1, 12], got {text!r}")
    return out


def _run_campaign_command(args, force_human: bool) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    config = parse_campaign_config(doc)
    _header(config.scheme.digest(), config.seed)
    pool_manifest = store.read_manifest(args.pool)
    val_manifest = store.read_manifest(args.validation)

    adapter_doc = doc.get("adapter", {"kind": "stub"})
    if adapter_doc.get("kind", "stub") == "stub":
        confusion = [tuple(p) for p in adapter_doc.get("confusion", [])]
        adapter = _make_adapter(
            "stub",
            truth_manifests=[pool_manifest, val_manifest],
            confusion=confusion,
            seed=int(adapter_doc.get("seed", 0)),
        )
    else:
        adapter = HttpAdapter(adapter_doc["endpoint"])
        adapter.describe()

    labeler = None
    service = None
    workdir = args.workdir or os.path.join(args.out, "rounds")
    os.makedirs(workdir, exist_ok=True)

    if force_human or config.labeler_mode == "human":
        from .labeling import LabelingService, rules_for_scheme

        queue = TaskQueue(make_label_validator(config.scheme))
        pool_by_id = {e.sample_id: e for e in pool_manifest.entries}

        def image_source(sample_id: str):
            entry = pool_by_id.get(sample_id)
            return pool_manifest.load_png_bytes(entry) if entry else None

        host, _, port = (args.bind or "127.0.0.1:8765").partition(":")
        service = LabelingService(
            queue,
            rules_for_scheme(config.scheme),
            image_source,
            assets_dir=args.assets,
            host=host,
            port=int(port or 0),
        )
        service.start()
        print(f"labeling service listening at {service.url}")
        image_refs = {sid: f"/images/{sid}.png" for sid in pool_by_id}
        labeler = QueueLabeler(queue, image_refs, timeout=args.label_timeout)

    try:
        camp = Campaign(config, pool_manifest, val_manifest, adapter, labeler=labeler, workdir=workdir)
        report = camp.run()
    finally:
        if service is not None:
            service.stop()

    os.makedirs(args.out, exist_ok=True)
    report_path = os.path.join(args.out, "campaign-report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    table = report.render_table()
    with open(os.path.join(args.out, "campaign-report.txt"), "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    print(table)
    print(f"report written to {report_path}")
    return EXIT_OK


def cmd_campaign(args) -> int:
    return _run_campaign_command(args, force_human=False)


def cmd_serve_labeler(args) -> int:
    return _run_campaign_command(args, force_human=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="captchakit", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"captchakit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="render a dataset from a scheme config")
    p.add_argument("--scheme", required=True, help="config path, 'weibo', or 'preset-N'")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("metrics", help="six-metric group report over three image dirs")
    p.add_argument("--real", required=True)
    p.add_argument("--imitation", required=True)
    p.add_argument("--synthetic", required=True)
    p.add_argument("--groups", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("mechanism-study", help="train/evaluate each preset and tabulate success rates")
    p.add_argument("--presets", default="1-12", help="e.g. '1-12' or '1,9,10,12'")
    p.add_argument("--count", type=int, default=4000, help="training samples per preset")
    p.add_argument("--test-count", type=int, default=400)
    p.add_argument("--epochs", type=int, default=None, help="epoch ceiling passed to the trainer")
    p.add_argument("--adapter", default="stub", help="'stub' or a trainer endpoint URL")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_mechanism_study)

    for name, fn in (("campaign", cmd_campaign), ("serve-labeler", cmd_serve_labeler)):
        p = sub.add_parser(name, help="run an active-learning campaign" if name == "campaign"
                           else "run a human-labeled campaign with the labeling UI served")
        p.add_argument("--config", required=True, help="campaign config document (JSON)")
        p.add_argument("--pool", required=True, help="pool dataset directory")
        p.add_argument("--validation", required=True, help="validation dataset directory")
        p.add_argument("--out", required=True)
        p.add_argument("--workdir", default=None, help="round materialization dir (default: <out>/rounds)")
        p.add_argument("--bind", default=None, help="labeling service host:port (human mode)")
        p.add_argument("--assets", default=None, help="labeling UI static assets dir")
        p.add_argument("--label-timeout", type=float, default=None)
        p.set_defaults(fn=fn)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (SchemeError, CampaignError, RenderError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AdapterError as e:
        print(f"adapter error: {e}", file=sys.stderr)
        return EXIT_ADAPTER
    except (store.StoreError, OSError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
