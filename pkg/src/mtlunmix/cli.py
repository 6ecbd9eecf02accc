"""``mtlunmix`` command line: synth, unmix, eval, render, gradcheck.

Exit codes: 0 success, 2 bad arguments or invalid input, 3 I/O failure,
4 numeric failure (divergence, failed gradient check).
"""
import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from .core import Hyperparams, UnmixError
from .metrics import evaluate, recon_rmse
from .optimizer import gradcheck
from .pipeline import INIT_METHODS, unmix
from .synthgen import MixingModel, make_scene

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("mtlunmix")


class NumericFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# Argument types
# ---------------------------------------------------------------------------


def size_arg(text):
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"size must look like WxH, got {text!r}")
    try:
        w, h = int(parts[0]), int(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError(f"size must be positive, got {text!r}")
    return w, h


def snr_arg(text):
    if text.lower() in ("none", "inf"):
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"SNR must be a number or 'none', got {text!r}") from None


def widths_arg(text):
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"widths must be comma-separated integers, got {text!r}") from None


def nonneg_float(text):
    v = float(text)
    if not (np.isfinite(v) and v >= 0):
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text!r}")
    return v


def pos_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def build_parser():
    ap = argparse.ArgumentParser(prog="mtlunmix", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene with ground truth")
    p.add_argument("--bands", type=pos_int, required=True)
    p.add_argument("--size", type=size_arg, required=True, metavar="WxH")
    p.add_argument("--endmembers", type=pos_int, required=True, metavar="K")
    p.add_argument("--model", choices=[m.value for m in MixingModel], default="lmm")
    p.add_argument("--snr", type=snr_arg, default=30.0, metavar="DB|none")
    p.add_argument("--concentration", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--library", type=Path, help="CSV spectral library to use as endmembers")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("unmix", help="blind unmixing of a cube")
    p.add_argument("--input", type=Path, required=True, metavar="STEM")
    p.add_argument("--endmembers", type=pos_int, required=True, metavar="K")
    p.add_argument("--alpha", type=nonneg_float, default=0.5)
    p.add_argument("--beta", type=nonneg_float, default=0.01)
    p.add_argument("--delta", type=nonneg_float, default=5.0)
    p.add_argument("--activation", choices=("relu", "tanh", "sigmoid"), default="relu")
    p.add_argument("--widths-e", type=widths_arg, default=None, metavar="LIST")
    p.add_argument("--widths-a", type=widths_arg, default=None, metavar="LIST")
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--init", choices=INIT_METHODS, default="vca")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=pos_int, default=None)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("eval", help="score estimates against ground truth")
    p.add_argument("--est", type=Path, required=True, metavar="DIR")
    p.add_argument("--truth", type=Path, required=True, metavar="DIR")
    p.add_argument("--out", type=Path, required=True, metavar="FILE")

    p = sub.add_parser("render", help="write abundance maps as PGM images")
    p.add_argument("--abundances", type=Path, required=True, metavar="STEM")
    p.add_argument("--size", type=size_arg, required=True, metavar="WxH")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of the analytic gradients")
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--activation", choices=("relu", "tanh", "sigmoid"), default="tanh")
    p.add_argument("--h", type=float, default=1e-5, help=argparse.SUPPRESS)
    return ap


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _dump(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def cmd_synth(args):
    W, H = args.size
    E = wl = None
    if args.library is not None:
        wl, E = io.read_spectral_library(args.library)
        if E.shape != (args.bands, args.endmembers):
            raise UnmixError(f"library is {E.shape[0]} bands x {E.shape[1]} spectra, "
                             f"flags ask for {args.bands} x {args.endmembers}")
    cube, truth = make_scene(args.bands, W, H, args.endmembers, args.model, args.snr,
                             args.concentration, args.seed, endmembers=E, wavelengths=wl)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    io.write_cube(cube, out / "scene")
    io.write_spectra_csv(truth.endmembers, out / "endmembers_true.csv", cube.wavelengths)
    io.write_matrix(truth.abundances, out / "abundances_true", W, H)
    _dump({"command": "synth", "version": __version__, "bands": args.bands,
           "width": W, "height": H, "endmembers": args.endmembers, "model": args.model,
           "snr_db": args.snr, "concentration": args.concentration, "seed": args.seed,
           "library": None if args.library is None else str(args.library)},
          out / "provenance.json")
    print(f"wrote scene {args.bands}x{W}x{H}, K={args.endmembers}, {args.model}, "
          f"snr={args.snr} to {out}")
    return EXIT_OK


def _thread_limit(n):
    if n is None:
        env = os.environ.get("UNMIX_THREADS")
        if env:
            try:
                n = int(env)
            except ValueError:
                raise UnmixError(f"UNMIX_THREADS must be an integer, got {env!r}") from None
            if n < 1:
                raise UnmixError(f"UNMIX_THREADS must be positive, got {n}")
    if n is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def cmd_unmix(args):
    cube = io.read_cube(args.input)
    hp = Hyperparams(alpha=args.alpha, beta=args.beta, delta=args.delta,
                     activation=args.activation, widths_e=args.widths_e,
                     widths_a=args.widths_a, iterations=args.iters)
    K = args.endmembers
    hp = hp.resolve(K, cube.P, cube.N)
    with _thread_limit(args.threads):
        res = unmix(cube, K, hp, init=args.init, seed=args.seed)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    A = res.abundances
    metrics = {"mean_sad_rad": None, "mean_sad_deg": None, "per_endmember_sad_rad": None,
               "armse": None, "recon_rmse": recon_rmse(cube, res.endmembers, A)}
    config = io.config_dict(hp, init=args.init, seed=args.seed, K=K, P=cube.P, N=cube.N,
                            width=cube.width, height=cube.height)
    io.write_results(out / "results.json", config, metrics, res.history.records,
                     res.endmembers, res.timing_seconds)
    io.write_spectra_csv(res.endmembers, out / "endmembers_est.csv", cube.wavelengths)
    io.write_matrix(A, out / "abundances_est", cube.width, cube.height)
    io.write_abundance_maps(A, cube.width, cube.height, out)
    h = res.history
    print(f"unmix: {len(h.records)} evaluations, best J {h.best_j:.6g} at iteration "
          f"{h.best_iter}, stop={h.stop_reason}, {res.timing_seconds:.1f}s")
    if h.diverged:
        raise NumericFailure("training diverged; best state written")
    return EXIT_OK


def _load_factors(d, kind):
    """Endmembers and abundances in directory ``d``; ``kind`` is 'est' or
    'true', falling back to the other naming."""
    for k in (kind, "true" if kind == "est" else "est"):
        csv_path = d / f"endmembers_{k}.csv"
        if csv_path.exists():
            _, E = io.read_spectral_library(csv_path)
            A = io.read_cube(d / f"abundances_{k}").data
            return E, A
    raise FileNotFoundError(f"no endmembers_est.csv or endmembers_true.csv in {d}")


def cmd_eval(args):
    E_est, A_est = _load_factors(args.est, "est")
    E_true, A_true = _load_factors(args.truth, "true")
    if E_est.shape[1] != E_true.shape[1]:
        raise UnmixError(f"K mismatch: estimate has {E_est.shape[1]} endmembers, "
                         f"truth has {E_true.shape[1]}")
    X = None
    scene = args.truth / "scene.json"
    if scene.exists():
        X = io.read_cube(args.truth / "scene")
    rep = evaluate(E_true, E_est, A_true, A_est, X)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    _dump(rep.as_dict(), args.out)
    print(f"mean SAD {rep.mean_sad_rad:.6f} rad ({rep.mean_sad_deg:.4f} deg), "
          f"aRMSE {rep.armse:.6f}"
          + ("" if rep.recon_rmse is None else f", recon RMSE {rep.recon_rmse:.6f}"))
    return EXIT_OK


def cmd_render(args):
    W, H = args.size
    hdr, _ = io.read_header(args.abundances)
    N = hdr.width * hdr.height
    if N != W * H:
        raise UnmixError(f"abundances have {N} pixels but --size gives {W}x{H} = {W * H}")
    A = io.read_cube(args.abundances).data
    paths = io.write_abundance_maps(A, W, H, args.out)
    print(f"wrote {len(paths)} maps to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args):
    rep = gradcheck(args.activation, seed=args.seed, h=args.h)
    print(json.dumps(rep.as_dict()))
    return EXIT_OK if rep.passed else EXIT_NUMERIC


COMMANDS = {"synth": cmd_synth, "unmix": cmd_unmix, "eval": cmd_eval,
            "render": cmd_render, "gradcheck": cmd_gradcheck}


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except io.FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except UnmixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
