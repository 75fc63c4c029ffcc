"""Command-line entry point: `dronecf <subcommand> ...`."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from dataclasses import replace

from . import dataio, pipeline, reports
from .config import ReproSettings, SinrSettings, SweepSettings, default_config, load_config, save_config
from .errors import PipelineError
from .pipeline import stage

log = logging.getLogger("dronecf")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="run configuration (JSON); default campaign when omitted")
    p.add_argument("--seed", type=int, help="master seed, overrides the config")
    p.add_argument("--out-dir", default=".", help="output directory (default: current)")
    p.add_argument("--format-version", type=int, default=dataio.FORMAT_VERSION,
                   help="dataset file format version to write or require")
    p.add_argument("--workers", type=int, default=1, help="worker threads; results do not depend on it")
    p.add_argument("-v", "--verbose", action="store_true")


def _dataset_arg(p):
    p.add_argument("--dataset", required=True, help="dataset file written by `sound` or `import`")
    p.add_argument("--ue", type=int, nargs="+", help="UE ids (default: config or every UE in the dataset)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dronecf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write the resolved run configuration")
    _common(p)

    p = sub.add_parser("sound", help="fly every plan for every UE and write the datasets")
    _common(p)

    p = sub.add_parser("gain-map", help="per-AP gain CSV for each UE of a dataset")
    _common(p)
    _dataset_arg(p)
    p.add_argument("--trial", type=int, help="trial to map (default: lowest per UE)")

    p = sub.add_parser("snr-sweep", help="uplink SNR versus random AP-subset size")
    _common(p)
    _dataset_arg(p)
    p.add_argument("--counts", type=int, nargs="+")
    p.add_argument("--n-subsets", type=int)

    p = sub.add_parser("sinr-eval", help="multi-user SINR under optimum and MR combining")
    _common(p)
    _dataset_arg(p)
    p.add_argument("--ap-counts", type=int, nargs="+")
    p.add_argument("--methods", nargs="+", choices=("optimum", "mr"))
    p.add_argument("--n-subsets", type=int)
    p.add_argument("--frequency-mode", choices=("per_realization", "averaged"))

    p = sub.add_parser("repro", help="RMS gain error between two flights of the same UE")
    _common(p)
    _dataset_arg(p)
    p.add_argument("--trials", type=int, nargs=2)

    p = sub.add_parser("import", help="convert an external channel file into the native format")
    _common(p)
    p.add_argument("source")
    p.add_argument("--mapping", required=True, help="mapping spec (JSON)")
    p.add_argument("--output", required=True, help="native dataset file to write")

    p = sub.add_parser("run", help="generate, sound and run every configured analysis")
    _common(p)
    return parser


def _config(args):
    with stage("config"):
        cfg = load_config(args.config) if args.config else default_config()
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.workers < 1:
            raise ValueError("--workers must be >= 1")
    return cfg


def _load(args):
    with stage("read"):
        return dataio.read_dataset(args.dataset, format_version=args.format_version)


def _tag(path) -> str:
    stem = os.path.splitext(os.path.basename(path))[0]
    return stem[len("dataset_"):] if stem.startswith("dataset_") else stem


def _out(args, name):
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, name)
    print(path)
    return path


def cmd_generate(args):
    cfg = _config(args)
    with stage("generate"):
        save_config(cfg, _out(args, "config.json"))


def cmd_sound(args):
    cfg = _config(args)
    for name in cfg.flight_plans:
        with stage(f"sound:{name}"):
            ds = pipeline.sound_plan(cfg, name, args.workers)
        with stage(f"write:{name}"):
            dataio.write_dataset(ds, _out(args, f"dataset_{name}.txt"), format_version=args.format_version)


def cmd_gain_map(args):
    ds = _load(args)
    tag = _tag(args.dataset)
    with stage("gain-map"):
        for uid in args.ue or ds.ue_ids():
            reports.write_gain_map(_out(args, f"gain_map_{tag}_ue{uid}.csv"), ds, uid, args.trial)


def _replace(settings, **kw):
    return replace(settings, **{k: v for k, v in kw.items() if v is not None})


def cmd_snr_sweep(args):
    cfg = _config(args)
    ds = _load(args)
    with stage("snr-sweep"):
        s = _replace(cfg.snr_sweep or SweepSettings(), counts=tuple(args.counts) if args.counts else None,
                     n_subsets=args.n_subsets)
        s = replace(s, ue_ids=tuple(args.ue or ds.ue_ids()), plans=None)
        cfg = replace(cfg, snr_sweep=s, ues=_dataset_ues(cfg, ds))
        reports.write_snr_sweep(_out(args, f"snr_sweep_{_tag(args.dataset)}.csv"),
                                pipeline.snr_sweep(cfg, ds, args.workers))


def cmd_sinr_eval(args):
    cfg = _config(args)
    ds = _load(args)
    with stage("sinr-eval"):
        s = _replace(cfg.sinr_eval or SinrSettings(),
                     ap_counts=tuple(args.ap_counts) if args.ap_counts else None,
                     methods=tuple(args.methods) if args.methods else None,
                     n_subsets=args.n_subsets, frequency_mode=args.frequency_mode)
        s = replace(s, ue_ids=tuple(args.ue or ds.ue_ids()), plans=None)
        cfg = replace(cfg, sinr_eval=s, ues=_dataset_ues(cfg, ds))
        reports.write_sinr_eval(_out(args, f"sinr_eval_{_tag(args.dataset)}.csv"), pipeline.sinr_eval(cfg, ds))


def cmd_repro(args):
    cfg = _config(args)
    ds = _load(args)
    with stage("repro"):
        s = _replace(cfg.repro or ReproSettings(), trials=tuple(args.trials) if args.trials else None,
                     ue_ids=tuple(args.ue) if args.ue else None, plans=None)
        cfg = replace(cfg, repro=s, ues=_dataset_ues(cfg, ds))
        reports.write_repro(_out(args, f"repro_{_tag(args.dataset)}.csv"), pipeline.repro(cfg, ds))


def _dataset_ues(cfg, ds):
    # analyses on a file only need ids; keep configured positions where known
    known = dict(cfg.ues)
    return tuple((u, known.get(u, (0.0, 0.0, 0.0))) for u in ds.ue_ids())


def cmd_import(args):
    with stage("import"):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", dataio.MappingWarning)
            ds = dataio.import_external(args.source, args.mapping)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    with stage("write"):
        out_dir = os.path.dirname(args.output)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
        dataio.write_dataset(ds, args.output, format_version=args.format_version)
        print(args.output)


def cmd_run(args):
    cfg = _config(args)
    result = pipeline.run_pipeline(cfg, args.out_dir, workers=args.workers, format_version=args.format_version)
    for path in result.files:
        print(path)


COMMANDS = {
    "generate": cmd_generate,
    "sound": cmd_sound,
    "gain-map": cmd_gain_map,
    "snr-sweep": cmd_snr_sweep,
    "sinr-eval": cmd_sinr_eval,
    "repro": cmd_repro,
    "import": cmd_import,
    "run": cmd_run,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except PipelineError as exc:
        print(f"dronecf: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
