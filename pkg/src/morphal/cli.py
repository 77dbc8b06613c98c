"""Command-line entry points for every workflow.

Subcommands: synth, train, al-run, scaling-exp, evaluate, extrapolate,
serve. Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from morphal.errors import MorphalError


class _Parser(argparse.ArgumentParser):
    # usage problems must exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")


def build_parser() -> _Parser:
    parser = _Parser(prog="morphal",
                     description="Semi-supervised AAE + active learning engine")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_common(p, data=True):
        if data:
            p.add_argument("--data", required=True, help="image directory (*.pgm)")
            p.add_argument("--labels", required=True, help="label CSV file")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="run seed")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, required=True, help="number of images")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--side", type=int, default=16)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--p-class1", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train one model with fixed labels")
    add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--labeled-frac", type=float, default=0.10,
                   help="fraction of the train split used as labeled data")
    p.add_argument("--supervised-only", action="store_true",
                   help="disable reconstruction and adversarial phases")

    p = sub.add_parser("al-run", help="full active-learning run (dataset oracle)")
    add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--strategy", choices=("uncertainty", "random"),
                   default="uncertainty")

    p = sub.add_parser("scaling-exp", help="pool-size scaling experiment")
    add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--a", type=int, required=True, help="labeled budget A")
    p.add_argument("--n-values", type=_int_list, required=True,
                   help="comma-separated pool sizes")
    p.add_argument("--seeds", type=_int_list, default=[0],
                   help="comma-separated run seeds")

    p = sub.add_parser("evaluate", help="accuracy of a checkpoint on a split")
    add_common(p)
    p.add_argument("--model", required=True, help="model checkpoint JSON")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")

    p = sub.add_parser("extrapolate", help="corpus-composition accuracy")
    p.add_argument("--a", type=int, required=True, help="labeled count")
    p.add_argument("--n", type=int, required=True, help="corpus size")
    p.add_argument("--acc-u", type=float, required=True,
                   help="accuracy on the unlabeled part")

    p = sub.add_parser("serve", help="run the human-oracle labeling service")
    add_common(p)
    p.add_argument("--out", default=None, help="checkpoint/report directory")
    p.add_argument("--addr", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--strategy", choices=("uncertainty", "random"),
                   default="uncertainty")
    p.add_argument("--resume", help="resume from a run checkpoint")
    p.add_argument("--ui-dir", default=None,
                   help="static UI directory (default: bundled frontend/dist)")
    return parser


def _load_world(args, settings):
    from morphal.data import load_dataset, make_splits

    dataset = load_dataset(args.data, args.labels)
    split = make_splits(dataset.ids, fractions=settings.split.fractions,
                        seed=settings.split.seed)
    return dataset, split


def _settings(args):
    from morphal.config import load_settings

    settings = load_settings(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        settings.train.seed = args.seed
    return settings


def cmd_synth(args) -> int:
    from morphal.data import generate_synthetic, write_labels_csv, write_pgm

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    images, labels = generate_synthetic(args.n, side=args.side,
                                        p_class1=args.p_class1,
                                        noise_sigma=args.noise, seed=args.seed)
    for rec in images:
        write_pgm(rec, out / f"{rec.id}.pgm")
    write_labels_csv(labels, out / "labels.csv")
    print(f"wrote {len(images)} images and labels.csv to {out}")
    return 0


def cmd_train(args) -> int:
    from morphal.aae import save_model, train_model
    from morphal.metrics import accuracy

    settings = _settings(args)
    cfg = settings.train
    if args.supervised_only:
        cfg.use_reconstruction = False
        cfg.use_adversarial = False
    dataset, split = _load_world(args, settings)

    rng = np.random.default_rng(cfg.seed)
    train_ids = sorted(split.train_ids)
    n_labeled = max(1, int(round(args.labeled_frac * len(train_ids))))
    picks = rng.choice(len(train_ids), size=n_labeled, replace=False)
    labeled_ids = [train_ids[i] for i in sorted(picks)]
    unlabeled_ids = sorted(set(train_ids) - set(labeled_ids))

    x_lab = dataset.pixel_matrix(labeled_ids)
    y_lab = dataset.binary_labels(labeled_ids, settings.oracle.threshold).astype(float)
    x_unl = dataset.pixel_matrix(unlabeled_ids) if unlabeled_ids else None

    model, history = train_model(dataset.n_pixels, (x_lab, y_lab), x_unl, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.json", rng_seed=cfg.seed)

    x_val = dataset.pixel_matrix(split.val_ids)
    y_val = dataset.binary_labels(split.val_ids, settings.oracle.threshold)
    val_acc = accuracy((model.predict_proba(x_val) >= 0.5).astype(int), y_val)
    last = ", ".join(f"{k}={v:.4f}" for k, v in sorted(history[-1].items()))
    print(f"trained {cfg.epochs} epochs on {n_labeled} labeled / "
          f"{len(unlabeled_ids)} unlabeled images")
    print(f"final epoch losses: {last}")
    print(f"val accuracy: {val_acc:.4f}")
    print(f"model saved to {out / 'model.json'}")
    return 0


def cmd_al_run(args) -> int:
    from morphal.active_learning import (
        Oracle,
        build_schedule,
        run_active_learning,
        write_round_reports,
    )
    from morphal.aae import save_model

    settings = _settings(args)
    dataset, split = _load_world(args, settings)
    schedule = build_schedule(len(split.train_ids),
                              seed_frac=settings.schedule.seed_frac,
                              step_frac=settings.schedule.step_frac,
                              cap_frac=settings.schedule.cap_frac)
    oracle = Oracle(mode="dataset",
                    votes_per_label=settings.oracle.votes_per_label,
                    labels=dataset.labels,
                    threshold=settings.oracle.threshold)
    reports = run_active_learning(dataset, split, schedule, settings.train,
                                  args.strategy, oracle,
                                  seed=settings.train.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_round_reports(reports, out / "report.csv")
    for r in reports:
        print(f"round {r.round_index}: labeled={r.labeled} actions={r.actions} "
              f"val_acc={r.val_acc:.4f} test_acc={r.test_acc:.4f}")
    print(f"report saved to {out / 'report.csv'}")
    return 0


def cmd_scaling_exp(args) -> int:
    from morphal.metrics import (
        SCALING_COLUMNS,
        ScalingConfig,
        emit_report_csv,
        run_scaling_experiment,
    )

    settings = _settings(args)
    dataset, split = _load_world(args, settings)
    cfg = ScalingConfig(a_labeled=args.a, n_values=args.n_values,
                        seeds=args.seeds)
    rows = run_scaling_experiment(cfg, dataset, settings.train, split=split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emit_report_csv(rows, out / "scaling.csv", columns=SCALING_COLUMNS)
    for row in rows:
        print(f"N={row['N']} A={row['A']} R={row['R']:.3f} seed={row['seed']} "
              f"final_test_acc={row['final_test_acc']:.4f}")
    print(f"table saved to {out / 'scaling.csv'}")
    return 0


def cmd_evaluate(args) -> int:
    from morphal.aae import load_model
    from morphal.metrics import accuracy

    settings = _settings(args)
    dataset, split = _load_world(args, settings)
    model, meta = load_model(args.model)
    ids = {"train": split.train_ids, "val": split.val_ids,
           "test": split.test_ids}[args.split]
    x = dataset.pixel_matrix(ids)
    y = dataset.binary_labels(ids, settings.oracle.threshold)
    acc = accuracy((model.predict_proba(x) >= 0.5).astype(int), y)
    print(f"{args.split} accuracy: {acc:.4f} "
          f"({len(ids)} images, checkpoint rounds={meta['rounds_completed']})")
    return 0


def cmd_extrapolate(args) -> int:
    from morphal.metrics import ExtrapolationInput, composed_accuracy

    value = composed_accuracy(ExtrapolationInput(args.a, args.n, args.acc_u))
    print(f"composed accuracy over {args.n} images "
          f"({args.a} labeled): {value!r}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from morphal.active_learning import ActiveLearningRun, build_schedule
    from morphal.service import LabelingService, create_app, load_run_checkpoint

    settings = _settings(args)
    dataset, split = _load_world(args, settings)
    if args.resume:
        run = load_run_checkpoint(dataset, args.resume)
    else:
        schedule = build_schedule(len(split.train_ids),
                                  seed_frac=settings.schedule.seed_frac,
                                  step_frac=settings.schedule.step_frac,
                                  cap_frac=settings.schedule.cap_frac)
        run = ActiveLearningRun(dataset, split, schedule, settings.train,
                                args.strategy, seed=settings.train.seed,
                                votes_per_label=settings.oracle.votes_per_label,
                                threshold=settings.oracle.threshold)
    service = LabelingService(run, out_dir=args.out)
    ui_dir = args.ui_dir
    if ui_dir is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        ui_dir = bundled if bundled.is_dir() else None
    app = create_app(service, ui_dir=ui_dir)
    print(f"labeling service on http://{args.addr}:{args.port} "
          f"(ui: {ui_dir or 'disabled'})")
    uvicorn.run(app, host=args.addr, port=args.port, log_level="warning")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "al-run": cmd_al_run,
    "scaling-exp": cmd_scaling_exp,
    "evaluate": cmd_evaluate,
    "extrapolate": cmd_extrapolate,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except MorphalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
