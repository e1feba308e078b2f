"""Command-line entry points for the trainer.

serve              run the protocol-v1 HTTP service
train-recognizer   fit a CRNN on a dataset manifest, offline
finetune-recognizer  continue from a stored model with frozen layers
evaluate           exact-match success rate of a stored model on a split
train-synthesizer  fit the unpaired translator on two manifests
synthesize         translate a manifest through a stored synthesizer
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .crnn import FREEZE_SPECS


def _log(line: str) -> None:
    print(line, file=sys.stderr)


def _hyperparams(args: argparse.Namespace) -> dict:
    hp = {}
    for name in ("learning_rate", "batch_size", "max_epochs", "early_stop_patience", "seed"):
        value = getattr(args, name)
        if value is not None:
            hp[name] = value
    return hp


def cmd_serve(args) -> int:
    from .service import make_server

    server = make_server(args.bind, args.model_store, log=_log)
    host, port = server.server_address[:2]
    print(f"trainer service on http://{host}:{port} (model store: {args.model_store})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def cmd_train_recognizer(args) -> int:
    from .crnn import train_recognizer
    from .manifest import read_dataset
    from .service import ModelStore

    dataset = read_dataset(args.manifest)
    bundle = train_recognizer(dataset, _hyperparams(args), log=_log)
    model_id = ModelStore(args.model_store).save_recognizer(bundle)
    print(f"model {model_id}: val_success_rate={bundle.config['val_success_rate']:.4f} "
          f"epochs_run={bundle.config['epochs_run']}")
    return 0


def cmd_finetune_recognizer(args) -> int:
    from .crnn import finetune_recognizer
    from .manifest import read_dataset
    from .service import ModelStore

    store = ModelStore(args.model_store)
    _, base = store.load_recognizer(args.base)
    dataset = read_dataset(args.manifest)
    bundle = finetune_recognizer(base, dataset, freeze_spec=args.freeze,
                                 hyperparams=_hyperparams(args), log=_log)
    model_id = store.save_recognizer(bundle)
    print(f"model {model_id}: val_success_rate={bundle.config['val_success_rate']:.4f} "
          f"epochs_run={bundle.config['epochs_run']} "
          f"trainable={bundle.trainable_parameters()}")
    return 0


def cmd_evaluate(args) -> int:
    from .crnn import predict_labels
    from .manifest import read_dataset
    from .service import ModelStore

    _, bundle = ModelStore(args.model_store).load_recognizer(args.model)
    dataset = read_dataset(args.manifest)
    entries = [e for e in dataset.entries if e.split == args.split and e.label]
    if not entries:
        print(f"no labeled {args.split!r} entries in {args.manifest}", file=sys.stderr)
        return 1
    labels, _ = predict_labels(bundle, [dataset.load_png(e) for e in entries])
    hits = sum(got == e.label for got, e in zip(labels, entries))
    print(f"success_rate={hits / len(entries):.4f} ({hits}/{len(entries)} on {args.split})")
    return 0


def cmd_train_synthesizer(args) -> int:
    from .cyclegan import train_synthesizer
    from .manifest import read_dataset
    from .service import ModelStore

    hp = {"epochs": args.max_epochs, "seed": args.seed, "cycle_weight": args.cycle_weight}
    if args.learning_rate is not None:
        hp["learning_rate"] = args.learning_rate
    if args.pairs_per_epoch is not None:
        hp["pairs_per_epoch"] = args.pairs_per_epoch
    bundle = train_synthesizer(
        read_dataset(args.imitation), read_dataset(args.real),
        {k: v for k, v in hp.items() if v is not None}, log=_log,
    )
    model_id = ModelStore(args.model_store).save_synthesizer(bundle)
    last = bundle.trace[-1]
    print(f"model {model_id}: epochs={len(bundle.trace)} final_total={last['total']:.4f}")
    return 0


def cmd_synthesize(args) -> int:
    from .cyclegan import synthesize_dataset
    from .manifest import read_dataset
    from .service import ModelStore

    model_id, bundle = ModelStore(args.model_store).load_synthesizer(args.model)
    out = synthesize_dataset(bundle, read_dataset(args.manifest), args.out)
    print(f"wrote {out.meta['count']} translated images to {args.out} (model {model_id})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="captcha-trainer",
                                     description="CRNN recognizer and unpaired synthesizer trainer")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP training service")
    p.add_argument("--bind", default="127.0.0.1:8700", help="host:port (default %(default)s)")
    p.add_argument("--model-store", required=True, help="checkpoint directory")
    p.set_defaults(func=cmd_serve)

    def training_flags(p):
        p.add_argument("--model-store", required=True)
        p.add_argument("--learning-rate", type=float, dest="learning_rate")
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--max-epochs", type=int, dest="max_epochs")
        p.add_argument("--patience", type=int, dest="early_stop_patience")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("train-recognizer", help="fit a recognizer on a manifest")
    p.add_argument("--manifest", required=True)
    training_flags(p)
    p.set_defaults(func=cmd_train_recognizer)

    p = sub.add_parser("finetune-recognizer", help="fine-tune a stored recognizer")
    p.add_argument("--manifest", required=True)
    p.add_argument("--base", required=True, help="base model id")
    p.add_argument("--freeze", default="all_but_top_fc", choices=sorted(FREEZE_SPECS))
    training_flags(p)
    p.set_defaults(func=cmd_finetune_recognizer)

    p = sub.add_parser("evaluate", help="exact-match success rate on a split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model-store", required=True)
    p.add_argument("--model", default=None, help="model id (default: latest)")
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("train-synthesizer", help="fit the unpaired image translator")
    p.add_argument("--imitation", required=True, help="imitation-domain manifest")
    p.add_argument("--real", required=True, help="real-domain manifest")
    p.add_argument("--model-store", required=True)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--pairs-per-epoch", type=int, dest="pairs_per_epoch", default=None)
    p.add_argument("--cycle-weight", type=float, dest="cycle_weight", default=None)
    p.add_argument("--learning-rate", type=float, dest="learning_rate", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train_synthesizer)

    p = sub.add_parser("synthesize", help="translate a manifest with a stored synthesizer")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model-store", required=True)
    p.add_argument("--model", default=None, help="synthesizer id (default: latest)")
    p.set_defaults(func=cmd_synthesize)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
