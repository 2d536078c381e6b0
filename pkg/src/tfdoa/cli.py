"""Command line entry point: ``tfdoa {estimate,eval,sweep,spectrum,rir}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .array import angular_distance
from .criteria import METHODS, estimate_doa, write_spectrum_csv
from .harness import (ExperimentConfig, emit_report, load_sweep, prepare_trial, report_rows,
                      run_experiment, run_sweep, trial_spectrum, with_overrides)
from .room import (decay_time, default_room, sabine_absorption, sample_scenario, schroeder_edc,
                   simulate_rirs)
from .signals import TimeSignal, write_wav

log = logging.getLogger("tfdoa")


def _add_common(p: argparse.ArgumentParser, out_required=False):
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--out", type=Path, required=out_required, help="output path")
    p.add_argument("--seed", type=int, help="base seed (u64)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--postproc", help="e.g. hadamard, binary_threshold(0.9)")
    p.add_argument("--sir-db", type=float)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--rt60", type=float)
    p.add_argument("--frames", type=int)
    p.add_argument("--trials", type=int)


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config.read_text()) if args.config else ExperimentConfig()
    return with_overrides(cfg, method=args.method, postproc=args.postproc, sir_db=args.sir_db,
                          snr_db=args.snr_db, rt60=args.rt60, T_frames=args.frames,
                          trials=args.trials, base_seed=args.seed)


def _write_report(summaries, out):
    if out is None:
        sys.stdout.write("\n".join(report_rows(summaries)) + "\n")
    else:
        emit_report(summaries, out)
        log.info("wrote %s", out)


def _trial_spectrum(cfg: ExperimentConfig, trial_index: int):
    prep = prepare_trial(cfg.scene_key, trial_index)
    return trial_spectrum(cfg, prep, trial_index), prep.theta_gt


def cmd_estimate(args):
    cfg = _config(args)
    spec, theta_gt = _trial_spectrum(cfg, args.trial)
    theta_hat = estimate_doa(spec)
    print(f"method={cfg.method} postproc={cfg.postproc} theta_hat={theta_hat:.1f} "
          f"theta_gt={theta_gt:.3f} abs_error={angular_distance(theta_hat, theta_gt):.3f}")
    if args.out:
        write_spectrum_csv(args.out, spec)


def cmd_spectrum(args):
    cfg = _config(args)
    methods = [cfg.method] if args.method else list(METHODS)
    out = args.out
    for m in methods:
        c = with_overrides(cfg, method=m)
        spec, theta_gt = _trial_spectrum(c, args.trial)
        path = out if len(methods) == 1 else out.with_name(f"{out.stem}_{m}{out.suffix}")
        write_spectrum_csv(path, spec)
        log.info("%s: peak at %.1f deg (truth %.2f), wrote %s", m, estimate_doa(spec), theta_gt, path)


def cmd_eval(args):
    cfg = _config(args)
    _write_report([run_experiment(cfg, workers=args.workers)], args.out)


def cmd_sweep(args):
    if args.config is None:
        raise SystemExit("sweep needs --config")
    configs = load_sweep(args.config.read_text())
    configs = [with_overrides(c, base_seed=args.seed, trials=args.trials, T_frames=args.frames)
               for c in configs]
    _write_report(run_sweep(configs, workers=args.workers), args.out)


def cmd_rir(args):
    rt60 = args.rt60 if args.rt60 is not None else 0.3
    room = default_room(rt60)
    sc = sample_scenario(rt60, np.inf, 0.0, 0, args.seed or 0, room=room)
    src = sc.speaker.position(sc.array.centroid)
    mic = sc.array.positions[0]
    h = simulate_rirs(room, src, mic, sabine_absorption(room))[0]
    out = args.out
    peak = float(np.max(np.abs(h)))
    write_wav(out.with_suffix(".wav"), TimeSignal(h), scale=0.99 / peak)
    edc = schroeder_edc(h)
    csv_path = out.with_name(out.stem + "_edc.csv")
    with open(csv_path, "w") as fh:
        fh.write("time_s,edc_db\n")
        for n, v in enumerate(edc):
            fh.write(f"{n / room.fs:.6f},{v:.6f}\n")
    print(f"rt60_target={rt60:.3f} rt60_measured={decay_time(h, room.fs):.3f} "
          f"image_order={room.max_image_order} peak_factor={0.99 / peak:.6g}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tfdoa", description="Wideband DoA estimation toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate the DoA of one simulated trial")
    _add_common(p)
    p.add_argument("--trial", type=int, default=0)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("spectrum", help="write normalized pseudo-spectra of one trial")
    _add_common(p, out_required=True)
    p.add_argument("--trial", type=int, default=0)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("eval", help="run one Monte-Carlo experiment")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run a Cartesian sweep of experiments")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("rir", help="simulate one RIR, write WAV and Schroeder decay CSV")
    _add_common(p, out_required=True)
    p.set_defaults(func=cmd_rir)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.func(args)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
