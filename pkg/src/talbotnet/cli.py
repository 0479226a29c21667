"""Command-line entry point.

Subcommands cover the whole workflow: dataset generation, training,
evaluation, the long-train-of-patterns simulation, the noise sweep, the
self-imaging check, and CSV waveform export. All artifacts are JSON/JSONL/CSV
and carry the hash of the configuration that produced them.

Exit codes: 0 success, 2 usage/configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys

import numpy as np

from .core import ValidationError, make_grid, synth_pulse_train
from .data import (
    DatasetFormatError,
    analog_spec,
    digital_spec,
    gen_dataset,
    load_dataset,
    make_label,
    save_dataset,
)
from .evaluate import (
    accuracy,
    consecutive_run,
    ivr_sweep,
    talbot_check,
)
from .network import (
    CompiledNetwork,
    NetworkSpec,
    ParamSet,
    PRESET_NAMES,
    carrier_train,
    params_from_list,
    params_to_list,
    preset,
    spec_from_dict,
    spec_to_dict,
)
from .train import NumericFailure, TrainConfig, fit

CHECKPOINT_VERSION = 1
ENV_OUT = "TALBOTNET_OUT"


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def file_sha256(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def out_dir(args) -> str:
    d = args.out or os.environ.get(ENV_OUT) or "."
    os.makedirs(d, exist_ok=True)
    return d


def resolve_seed(args, fallback: int = 0) -> int:
    return fallback if args.seed is None else args.seed


def build_network(preset_name, samples_per_period, network_dict=None) -> NetworkSpec:
    if network_dict is not None:
        spec = spec_from_dict(network_dict)
        if samples_per_period:
            spec = spec.with_samples_per_period(samples_per_period)
        return spec
    spec = preset(preset_name)
    if samples_per_period:
        spec = spec.with_samples_per_period(samples_per_period)
    return spec


def dataset_spec_from_args(args, seed):
    kw = dict(ivr_db=args.ivr, n_per_class=args.n_per_class, seed=seed,
              train_fraction=args.train_fraction,
              noise_on_zero_slots=not args.noise_on_ones_only)
    if args.kind == "analog":
        return analog_spec(**kw)
    chars = tuple(args.chars.split(","))
    slots = tuple(int(s) for s in args.label_slots.split(","))
    return digital_spec(chars=chars, label_slots=slots, **kw)


def train_config_from_args(args, seed) -> TrainConfig:
    return TrainConfig(optimizer=args.optimizer, lr0=args.lr0,
                       decay_factor=args.decay_factor,
                       decay_every=args.decay_every,
                       batch_size=args.batch_size, epochs=args.epochs,
                       restarts=args.restarts, seed=seed,
                       init_scale=args.init_scale)


def load_checkpoint(path):
    with open(path) as fh:
        ck = json.load(fh)
    if ck.get("format_version") != CHECKPOINT_VERSION:
        raise ValidationError(
            f"unsupported checkpoint format_version {ck.get('format_version')}")
    spec = spec_from_dict(ck["network"])
    theta = params_from_list(spec, ck["theta"])
    return ck, spec, theta


def check_dataset_match(ck, data_path):
    sha = file_sha256(data_path)
    if ck["dataset_sha256"] != sha:
        raise ValidationError(
            f"dataset file {data_path} (sha256 {sha[:12]}…) does not match the "
            f"checkpoint's dataset ({ck['dataset_sha256'][:12]}…)")


def load_matching_dataset(ck, spec, data_path):
    check_dataset_match(ck, data_path)
    ds = load_dataset(data_path)
    if ds.num_periods != spec.num_periods:
        raise ValidationError("dataset period count does not match network")
    return ds


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    seed = resolve_seed(args)
    dspec = dataset_spec_from_args(args, seed)
    ds = gen_dataset(dspec, f_rep=args.f_rep, pad_periods_each_side=args.pad)
    path = os.path.join(out_dir(args), args.name)
    save_dataset(ds, path)
    print(f"wrote {path}: {len(ds.samples)} samples, "
          f"{len(ds.train_idx)} train / {len(ds.test_idx)} test")
    return 0


def cmd_train(args) -> int:
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
        net = build_network(cfg.get("preset"), cfg.get("samples_per_period"),
                            cfg.get("network"))
        tc = TrainConfig(**cfg.get("train", {}))
        data_path = cfg["data"]
        preset_name = cfg.get("preset")
        if args.seed is not None:
            tc = dataclasses.replace(tc, seed=args.seed)
    else:
        if not args.preset or not args.data:
            raise ValidationError("train needs --config, or --preset and --data")
        net = build_network(args.preset, args.npp)
        tc = train_config_from_args(args, resolve_seed(args))
        data_path = args.data
        preset_name = args.preset

    ds = load_dataset(data_path)
    if ds.num_periods != net.num_periods:
        raise ValidationError(
            f"dataset spans {ds.num_periods} periods, network expects "
            f"{net.num_periods}")
    if ds.f_rep != net.f_rep:
        raise ValidationError(
            f"dataset f_rep {ds.f_rep} differs from network f_rep {net.f_rep}")
    dataset_sha = file_sha256(data_path)
    resolved = {
        "preset": preset_name,
        "network": spec_to_dict(net),
        "train": dataclasses.asdict(tc),
        "dataset_sha256": dataset_sha,
    }
    chash = config_hash(resolved)

    res = fit(net, ds, tc)

    d = out_dir(args)
    write_json({"config_hash": chash, **resolved,
                "dataset_path": os.path.abspath(data_path)},
               os.path.join(d, "run.json"))
    with open(os.path.join(d, "log.jsonl"), "w") as fh:
        for entry in res.log:
            fh.write(canonical_json(entry.to_dict()) + "\n")
    write_json({
        "format_version": CHECKPOINT_VERSION,
        "config_hash": chash,
        "preset": preset_name,
        "network": spec_to_dict(net),
        "dataset_sha256": dataset_sha,
        "seed": tc.seed,
        "best_epoch": res.best_epoch,
        "best_restart": res.best_restart,
        "best_test_acc": res.best_test_acc,
        "best_cost": res.best_cost,
        "aborted_restarts": [list(a) for a in res.aborted_restarts],
        "theta": params_to_list(res.best_theta),
    }, os.path.join(d, "checkpoint.json"))
    print(f"best test accuracy {res.best_test_acc:.4f} "
          f"(restart {res.best_restart}, epoch {res.best_epoch}); "
          f"artifacts in {d}")
    return 0


def cmd_eval(args) -> int:
    ck, spec, theta = load_checkpoint(args.checkpoint)
    ds = load_matching_dataset(ck, spec, args.data)
    acc = accuracy(spec, theta, ds, which=args.split)
    report = {
        "config_hash": ck["config_hash"],
        "split": args.split,
        "n_samples": int(len(ds.test_idx if args.split == "test"
                             else ds.train_idx)),
        "accuracy": acc,
    }
    print(json.dumps(report, indent=1, sort_keys=True))
    if args.out:
        write_json(report, os.path.join(out_dir(args), "eval.json"))
    return 0


def cmd_simulate(args) -> int:
    ck, spec, theta = load_checkpoint(args.checkpoint)
    ds = load_matching_dataset(ck, spec, args.data)
    classes = ds.spec.classes
    pad, pp = ds.pad_periods_each_side, ds.pattern_periods

    if args.samples:
        indices = [int(s) for s in args.samples.split(",")]
    else:
        # default: first test sample of each of the first two classes
        indices = []
        for want in (0, 1):
            indices.append(next(int(i) for i in ds.test_idx
                                if ds.samples[i].class_id == want))
    patterns = [ds.samples[i].slot_amplitudes[pad:pad + pp] for i in indices]
    true_ids = [ds.samples[i].class_id for i in indices]

    verdicts = consecutive_run(spec, theta, patterns, args.gap, classes,
                               true_ids)
    report = {
        "config_hash": ck["config_hash"],
        "gap_periods": args.gap,
        "sample_indices": indices,
        "verdicts": [dataclasses.asdict(v) for v in verdicts],
        "all_correct": all(v.correct for v in verdicts),
    }
    print(json.dumps(report, indent=1, sort_keys=True))
    if args.out:
        write_json(report, os.path.join(out_dir(args), "simulate.json"))
    return 0


def cmd_sweep_ivr(args) -> int:
    seed = resolve_seed(args)
    net = build_network(args.preset, args.npp)
    dspec = dataset_spec_from_args(args, seed)
    tc = train_config_from_args(args, seed)
    ivrs = [float(v) for v in args.ivrs.split(",")]
    result = ivr_sweep(net, dspec, ivrs, tc, mode=args.mode)
    rows = result.to_rows()
    for ivr, acc in rows:
        print(f"ivr {ivr:6.1f} dB  accuracy {acc:.4f}")
    path = os.path.join(out_dir(args), "ivr_sweep.csv")
    write_csv(path, ["ivr_db", "accuracy"], rows)
    print(f"wrote {path}")
    return 0


def cmd_talbot_check(args) -> int:
    report = talbot_check(args.f_rep, args.s, samples_per_period=args.npp,
                          num_periods=args.periods, gdd_scale=args.scale)
    print(json.dumps(report.to_dict(), indent=1, sort_keys=True))
    if args.out:
        write_json(report.to_dict(), os.path.join(out_dir(args),
                                                  "talbot_check.json"))
    return 0


def cmd_export_waveform(args) -> int:
    ck, spec, theta = load_checkpoint(args.checkpoint)
    ds = load_matching_dataset(ck, spec, args.data)
    sample = ds.samples[args.index]
    grid = spec.grid
    t = grid.time_axis()

    carrier = carrier_train(spec)
    inp = carrier.samples * np.repeat(sample.slot_amplitudes,
                                      grid.samples_per_period)
    i_in = inp.real ** 2 + inp.imag ** 2
    cls = next(c for c in ds.spec.classes if c.class_id == sample.class_id)
    i_label = make_label(cls, grid, spec.pulse_shape, ds.pad_periods_each_side)
    net = CompiledNetwork(spec)
    out, _ = net.run_with_factors(inp[None, :], net.modulation_factors(theta))
    i_out = (out.real ** 2 + out.imag ** 2)[0]

    d = out_dir(args)
    paths = []
    for tag, inten in (("input", i_in), ("label", i_label), ("output", i_out)):
        path = os.path.join(d, f"waveform_{args.index}_{tag}.csv")
        write_csv(path, ["time_s", "intensity"],
                  [(repr(float(ti)), repr(float(vi)))
                   for ti, vi in zip(t, inten)])
        paths.append(path)
    print("wrote " + ", ".join(paths))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--out", default=None,
                   help=f"output directory (default ${ENV_OUT} or .)")
    p.add_argument("--seed", type=int, default=None, help="seed override")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker cap (the numeric engine is vectorized; "
                        "values > 1 are accepted and currently ignored)")


def _add_dataset_args(p):
    p.add_argument("--kind", choices=("analog", "digital"), default="digital")
    p.add_argument("--chars", default="u,c,a,s",
                   help="digital classes, comma separated")
    p.add_argument("--label-slots", default="1,3,5,7",
                   help="pattern-local label peak slots, comma separated")
    p.add_argument("--ivr", type=float, default=30.0,
                   help="amplitude variance rate in dB")
    p.add_argument("--n-per-class", type=int, default=100)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--noise-on-ones-only", action="store_true",
                   help="add noise only to nonzero slots")
    p.add_argument("--f-rep", type=float, default=5e9)
    p.add_argument("--pad", type=int, default=8)


def _add_train_args(p):
    p.add_argument("--npp", type=int, default=None,
                   help="samples per period override")
    p.add_argument("--optimizer", choices=("sgd", "adam"), default="adam")
    p.add_argument("--lr0", type=float, default=0.01)
    p.add_argument("--decay-factor", type=float, default=0.3)
    p.add_argument("--decay-every", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=6)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--init-scale", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="talbotnet",
        description="Serial optical neural networks on dispersive pulse trains")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a dataset file")
    _add_dataset_args(p)
    p.add_argument("--name", default="dataset.json")
    _add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a network on a dataset file")
    p.add_argument("--config", help="JSON run config (see docs/schema.md)")
    p.add_argument("--preset", choices=PRESET_NAMES)
    p.add_argument("--data", help="dataset file")
    _add_train_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate",
                       help="classify consecutive patterns on one long train")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--samples", help="comma-separated dataset sample indices")
    p.add_argument("--gap", type=int, default=16,
                   help="zero periods between consecutive patterns")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep-ivr", help="accuracy vs amplitude noise level")
    p.add_argument("--preset", choices=PRESET_NAMES, default="digital4")
    p.add_argument("--ivrs", default="0,10,20,30",
                   help="comma-separated IVR values in dB")
    p.add_argument("--mode", choices=("train", "reeval"), default="train")
    _add_dataset_args(p)
    _add_train_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_sweep_ivr)

    p = sub.add_parser("talbot-check",
                       help="self-imaging correlation of the bare train")
    p.add_argument("--f-rep", type=float, default=5e9)
    p.add_argument("--s", type=int, default=1, help="self-imaging order")
    p.add_argument("--npp", type=int, default=1024)
    p.add_argument("--periods", type=int, default=31)
    p.add_argument("--scale", type=float, default=1.0,
                   help="dispersion detuning factor")
    _add_common(p)
    p.set_defaults(func=cmd_talbot_check)

    p = sub.add_parser("export-waveform",
                       help="dump input/label/output waveforms as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, required=True,
                   help="dataset sample index")
    _add_common(p)
    p.set_defaults(func=cmd_export_waveform)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, DatasetFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON at offset {exc.pos}: {exc.msg}",
              file=sys.stderr)
        return 2
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
