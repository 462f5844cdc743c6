"""Command-line entry point: ``glmbpitch <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import io as gio
from .config import RunConfig, resolve
from .estimator import SubbandPitchEstimator
from .evaluation import mix_at_snr, score, synth_harmonic
from .filterbank import design_filterbank
from .tracker import track

log = logging.getLogger("glmbpitch")


class CliError(Exception):
    """Expected failure reported as a single line."""


# -- formatting ----------------------------------------------------------------

def _f(x, digits=6):
    return f"{x:.{digits}f}"


def _out_stream(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _write_table(path, header, rows):
    fh, close = _out_stream(path)
    try:
        gio.write_csv(fh, header, rows)
    finally:
        if close:
            fh.close()


def _load_16k(path):
    buf = gio.load_wav(path)
    if buf.sample_rate != gio.TARGET_RATE:
        log.info("resampling %s from %d Hz to %d Hz", path, buf.sample_rate, gio.TARGET_RATE)
    return gio.resample_to_16k(buf)


def _is_wav(path):
    with open(path, "rb") as fh:
        head = fh.read(12)
    return head[:4] in (b"RIFF", b"RIFX", b"RF64") and head[8:12] == b"WAVE"


# -- subcommands -------------------------------------------------------------

def cmd_design(cfg, args):
    spec, _ = design_filterbank(cfg.f_min, cfg.f_max, cfg.eta_c, cfg.order, cfg.sample_rate)
    rows = [(b, _f(fc), _f(fb), _f(eta, 9)) for b, fc, fb, eta in spec.to_rows()]
    _write_table(args.out, ("band", "center_hz", "bandwidth_hz", "eta_realized"), rows)


def _estimate(cfg, path):
    buf = _load_16k(path)
    est = SubbandPitchEstimator(**cfg.estimator_kwargs()).fit()
    return est, est.predict(buf.samples)


def cmd_estimate(cfg, args):
    _, frames = _estimate(cfg, args.input)
    rows = [
        (m.frame_index, _f(m.time), _f(f), _f(s))
        for m in frames for f, s in zip(m.estimates, m.peak_strengths)
    ]
    _write_table(args.out, ("frame", "time_s", "f0_hz", "strength"), rows)


def cmd_correlogram(cfg, args):
    buf = _load_16k(args.input)
    est = SubbandPitchEstimator(**cfg.estimator_kwargs()).fit()
    acs = est.transform(buf.samples)
    delays = est.frame_.delays
    times = est.frame_times(acs.shape[0])
    rows = [
        (j, _f(times[j]), int(d), _f(acs[j, d]))
        for j in range(acs.shape[0]) for d in delays
    ]
    _write_table(args.out, ("frame", "time_s", "delay", "value"), rows)


def cmd_track(cfg, args):
    if _is_wav(args.input):
        _, frames = _estimate(cfg, args.input)
        stream = [m.estimates for m in frames]
        times = [m.time for m in frames]
    else:
        stream, times = gio.read_measurements(args.input, hop_s=cfg.hop_ms * 1e-3)
    out = track(stream, cfg.tracker_params(), cfg.mode, cfg.seed, times=times)
    rows = [(r.frame, _f(r.time), r.label, _f(r.f0), _f(r.weight)) for r in out.rows]
    _write_table(args.out, ("frame", "time_s", "label", "f0_hz", "weight"), rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def cmd_eval(cfg, args):
    times, f0, labels = gio.read_track_table(args.est)
    truth = gio.read_truth(args.truth)
    truth2 = gio.read_truth(args.truth2) if args.truth2 else None
    report = score(times, f0, truth, labels=labels, truth2=truth2)
    text = json.dumps(_jsonable(report.to_dict()), sort_keys=True)
    fh, close = _out_stream(args.out)
    try:
        fh.write(text + "\n")
    finally:
        if close:
            fh.close()


def cmd_mix(cfg, args):
    speech = gio.load_wav(args.speech)
    noise = gio.load_wav(args.noise)
    if speech.sample_rate != noise.sample_rate:
        speech, noise = gio.resample_to_16k(speech), gio.resample_to_16k(noise)
    mixture, _ = mix_at_snr(speech.samples, noise.samples, args.snr_db)
    gio.write_wav(args.out, gio.AudioBuffer(mixture, speech.sample_rate))


def cmd_synth(cfg, args):
    f0, hop = gio.read_f0_track(args.f0_track)
    n = args.harmonics
    if n < 1:
        raise CliError("--harmonics must be at least 1")
    x = synth_harmonic(f0, n, np.full(n, 1.0 / n), fs=cfg.sample_rate, hop_s=hop)
    gio.write_wav(args.out, gio.AudioBuffer(x, cfg.sample_rate))


# -- parser ------------------------------------------------------------------

def _key_value(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    key = key.strip().replace("-", "_")
    if key not in RunConfig.keys():
        raise argparse.ArgumentTypeError(f"unknown parameter {key!r}")
    return key, value.strip()


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="TOML", help="flat key/value configuration file")
    common.add_argument("--set", dest="overrides", action="append", type=_key_value,
                        default=[], metavar="KEY=VALUE",
                        help="override any configuration key (repeatable)")
    common.add_argument("--log-level", default="INFO",
                        choices=("DEBUG", "INFO", "WARNING", "ERROR"))

    def with_out(p, required=False):
        p.add_argument("--out", "-o", required=required,
                       help="output path" + ("" if required else " (default: stdout)"))
        return p

    parser = argparse.ArgumentParser(
        prog="glmbpitch",
        description="Subband pitch estimation and labeled multi-pitch tracking.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = with_out(sub.add_parser("design", parents=[common], help="print the filterbank design"))
    p.add_argument("--f-min", type=float)
    p.add_argument("--f-max", type=float)
    p.add_argument("--eta-c", type=float)
    p.add_argument("--order", type=int)
    p.set_defaults(func=cmd_design)

    for name, func, text in (("estimate", cmd_estimate, "per-frame pitch candidates"),
                             ("correlogram", cmd_correlogram, "dump the summary correlogram")):
        p = with_out(sub.add_parser(name, parents=[common], help=text))
        p.add_argument("input", help="WAV file")
        p.add_argument("--multi", action="store_true", default=None,
                       help="keep every non-harmonic peak")
        p.add_argument("--threshold", type=float)
        p.add_argument("--hop-ms", type=float)
        p.set_defaults(func=func)

    p = with_out(sub.add_parser("track", parents=[common], help="track pitches over time"))
    p.add_argument("input", help="WAV file or CSV written by 'estimate'")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--single", dest="multi", action="store_false", default=None)
    mode.add_argument("--multi", dest="multi", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--hop-ms", type=float)
    p.set_defaults(func=cmd_track)

    p = with_out(sub.add_parser("eval", parents=[common], help="score against ground truth"))
    p.add_argument("--est", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--truth2")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mix", parents=[common], help="add noise at a given SNR")
    p.add_argument("--speech", required=True)
    p.add_argument("--noise", required=True)
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--out", "-o", required=True)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("synth", parents=[common], help="harmonic test signal from a pitch track")
    p.add_argument("--f0-track", required=True)
    p.add_argument("--harmonics", type=int, default=8)
    p.add_argument("--out", "-o", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


_FLAG_KEYS = ("f_min", "f_max", "eta_c", "order", "multi", "threshold", "hop_ms", "seed")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = dict(args.overrides)
        overrides.update({k: getattr(args, k) for k in _FLAG_KEYS
                          if getattr(args, k, None) is not None})
        cfg = resolve(args.config, overrides)
        log.info("resolved config: %s", json.dumps(cfg.as_dict(), sort_keys=True))
        args.func(cfg, args)
    except (CliError, OSError, ValueError, KeyError) as exc:
        message = " ".join(str(exc).split()) or type(exc).__name__
        print(f"glmbpitch: error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
