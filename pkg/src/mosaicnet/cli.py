"""Single command-line entry point.

Subcommands: search, sweep, flops, entropy, mosaic, demosaic, gradcheck,
train-toy, compare, eval, report. Every run is deterministic given --seed and
--threads; artifacts are written under --out with fixed names so repeated
runs are byte-identical.

Exit codes: 0 success, 1 domain error (one-line `error: ...` on stderr),
2 usage error (from argument parsing).
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _set_threads(n: int):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _write_json(path, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_pair(text: str, name: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"{name} must be 'a,b', got {text!r}")
    return int(parts[0]), int(parts[1])


def _parse_noise(text):
    if text is None or text in ("none", "clean"):
        return None
    if "," in text:
        gain, sigma = text.split(",")
        return float(gain), float(sigma)
    return text


def _add_common(p: argparse.ArgumentParser, out_default="out"):
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--threads", type=int, default=1, help="BLAS/OpenMP threads (default 1)")
    p.add_argument("--precision", choices=("standard", "high"), default="standard",
                   help="float32 (standard) or float64 (high)")
    p.add_argument("--out", default=out_default, help=f"artifact directory (default {out_default!r})")


def _add_config_flags(p: argparse.ArgumentParser, d=2, w=16, blocks=2, c_in=4):
    p.add_argument("--d", type=int, default=d, help=f"stem downsampling ratio (default {d})")
    p.add_argument("--w", type=int, default=w, help=f"trunk width in channels (default {w})")
    p.add_argument("--blocks", type=int, default=blocks, help=f"block count (default {blocks})")
    p.add_argument("--c-in", type=int, default=c_in, help=f"input channels (default {c_in})")
    p.add_argument("--c-out", type=int, default=3, help="output channels (default 3)")


def _add_search_flags(p: argparse.ArgumentParser):
    p.add_argument("--d-min", type=int, default=1, help="smallest d (default 1)")
    p.add_argument("--d-max", type=int, default=4, help="largest d (default 4)")
    p.add_argument("--w-min", type=int, default=8, help="smallest width (default 8)")
    p.add_argument("--w-max", type=int, default=512, help="largest width (default 512)")
    p.add_argument("--b-min", type=int, default=4, help="smallest block count (default 4)")
    p.add_argument("--b-max", type=int, default=512, help="largest block count (default 512)")
    p.add_argument("--grid", type=int, default=4, help="w and B step size (default 4)")
    p.add_argument("--c-in", type=int, default=4, help="input channels (default 4)")
    p.add_argument("--c-out", type=int, default=3, help="output channels (default 3)")
    p.add_argument("--ref-size", type=int, default=256,
                   help="square reference resolution in pixels for the budget (default 256)")
    p.add_argument("--frontier", type=int, default=10, help="frontier length in the JSON (default 10)")


def _constraints_from_args(args, budget: float, rho: str):
    from .search import SearchConstraints, as_fraction

    return SearchConstraints(
        budget_gflops=budget,
        rho=as_fraction(rho),
        d_range=(args.d_min, args.d_max),
        w_range=(args.w_min, args.w_max),
        b_range=(args.b_min, args.b_max),
        grid=args.grid,
        c_in=args.c_in,
        c_out=args.c_out,
        ref_h=args.ref_size,
        ref_w=args.ref_size,
    )


# ---------------------------------------------------------------------------
# Image I/O (PNG via Pillow, tensors via the package format)


def _load_image(path) -> "np.ndarray":
    import numpy as np

    from . import tensorio

    if str(path).endswith(".tns"):
        return tensorio.load_tensor(path).astype(np.float64)
    from PIL import Image

    img = Image.open(path)
    if img.mode in ("I;16", "I"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
        arr = arr[None]
    elif img.mode == "L":
        arr = np.asarray(img, dtype=np.float64)[None] / 255.0
    else:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64).transpose(2, 0, 1) / 255.0
    return arr[None]


def _save_png(path, arr):
    import numpy as np
    from PIL import Image

    a = np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0)[0]
    a8 = np.round(a * 255.0).astype(np.uint8)
    if a8.shape[0] == 1:
        Image.fromarray(a8[0], mode="L").save(path)
    else:
        Image.fromarray(a8.transpose(1, 2, 0), mode="RGB").save(path)


# ---------------------------------------------------------------------------
# Subcommand handlers


def _cmd_search(args) -> int:
    from .search import solve

    constraints = _constraints_from_args(args, args.budget_gflops, args.rho)
    result = solve(constraints, frontier_size=args.frontier)
    out = _outdir(args)
    with open(os.path.join(out, "search.json"), "w") as fh:
        fh.write(result.to_json())
    if result.best is None:
        print("infeasible: no grid point satisfies the constraints")
        return 0
    b = result.best
    print(
        f"best d={b.d} w={b.w} B={b.B}  entropy={result.best_entropy:.6f}  "
        f"flops={result.best_flops / 1e9:.4f} GF  feasible={result.feasible_count}"
    )
    return 0


def _cmd_sweep(args) -> int:
    from .harness import report_table
    from .search import as_fraction, sweep, write_sweep_csv

    budgets = [float(x) for x in args.budgets_gflops.split(",")]
    rhos = [as_fraction(x) for x in args.rhos.split(",")]
    result = sweep(
        budgets,
        rhos,
        frontier_size=args.frontier,
        d_range=(args.d_min, args.d_max),
        w_range=(args.w_min, args.w_max),
        b_range=(args.b_min, args.b_max),
        grid=args.grid,
        c_in=args.c_in,
        c_out=args.c_out,
        ref_h=args.ref_size,
        ref_w=args.ref_size,
    )
    out = _outdir(args)
    write_sweep_csv(result, os.path.join(out, "sweep.csv"))
    with open(os.path.join(out, "sweep.json"), "w") as fh:
        fh.write(result.to_json())
    print(report_table(result.to_dicts()), end="")
    return 0


def _cmd_flops(args) -> int:
    from .archmodel import ArchConfig, flops

    cfg = ArchConfig(d=args.d, w=args.w, B=args.blocks, c_in=args.c_in, c_out=args.c_out)
    report = flops(cfg, args.height, args.width).to_dict()
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        _write_json(os.path.join(_outdir(args), "flops.json"), report)
    return 0


def _cmd_entropy(args) -> int:
    from .archmodel import ArchConfig, entropy_at_resolution, entropy_invariant

    cfg = ArchConfig(d=args.d, w=args.w, B=args.blocks, c_in=args.c_in, c_out=args.c_out)
    payload = {"invariant": entropy_invariant(cfg).to_dict()}
    if args.height:
        payload["at_resolution"] = entropy_at_resolution(cfg, args.height, args.width or args.height).to_dict()
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    if args.out:
        _write_json(os.path.join(_outdir(args), "entropy.json"), payload)
    return 0


def _cmd_mosaic(args) -> int:
    from . import cfa, tensorio

    img = _load_image(args.input)
    if img.shape[1] != 3:
        raise ValueError(f"mosaic needs an RGB input, got {img.shape[1]} channels")
    pattern = cfa.get_pattern(args.pattern)
    phase = _parse_pair(args.phase, "--phase")
    raw = cfa.mosaic(img, pattern, phase)
    noise = _parse_noise(args.noise)
    if noise is not None:
        gain, sigma = cfa.noise_params(noise)
        raw = cfa.add_noise(raw, gain, sigma, seed=args.seed, pattern=pattern, phase=phase)
    out = _outdir(args)
    tensorio.save_tensor(os.path.join(out, "raw.tns"), raw)
    _save_png(os.path.join(out, "raw.png"), raw)
    if args.append_cfa:
        tensorio.save_tensor(os.path.join(out, "net_input.tns"), cfa.append_cfa_planes(raw, pattern, phase))
    print(f"wrote raw mosaic {raw.shape[2]}x{raw.shape[3]} ({args.pattern}) to {out}")
    return 0


def _cmd_demosaic(args) -> int:
    from . import cfa, tensorio

    raw = _load_image(args.input)
    if raw.shape[1] != 1:
        raise ValueError(f"demosaic needs a single-channel raw input, got {raw.shape[1]} channels")
    pattern = cfa.get_pattern(args.pattern)
    phase = _parse_pair(args.phase, "--phase")
    rgb = cfa.bilinear_demosaic(raw, pattern, phase)
    out = _outdir(args)
    tensorio.save_tensor(os.path.join(out, "rgb.tns"), rgb)
    _save_png(os.path.join(out, "rgb.png"), rgb)
    print(f"wrote bilinear demosaic {rgb.shape[2]}x{rgb.shape[3]} ({args.pattern}) to {out}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import OPS, run_gradcheck

    ops_list = args.ops.split(",") if args.ops else list(OPS)
    report = run_gradcheck(trials=args.trials, seed=args.seed, tol=args.tol, op_names=ops_list)
    for name, entry in report["ops"].items():
        status = "ok" if entry["failures"] == 0 else "FAIL"
        print(f"{name:16s} cases={entry['cases']:3d}  max_rel_err={entry['max_rel_err']:.3e}  {status}")
    if args.out:
        _write_json(os.path.join(_outdir(args), "gradcheck.json"), report)
    if not report["passed"]:
        print("error: gradient check failed", file=sys.stderr)
        return 1
    return 0


def _cmd_train_toy(args) -> int:
    from . import cfa, net as netmod, train
    from .archmodel import ArchConfig
    from .harness import input_channels, make_toy_dataset

    pattern = cfa.get_pattern(args.pattern)
    noise = _parse_noise(args.noise)
    c_in = input_channels(args.append_cfa)
    cfg = ArchConfig(d=args.d, w=args.w, B=args.blocks, c_in=c_in, c_out=3)
    if args.patch % cfg.d:
        raise ValueError(f"patch {args.patch} not divisible by d={cfg.d}")
    dataset = make_toy_dataset(
        args.count, args.patch, seed=args.seed, pattern=pattern,
        noise=noise, append_cfa=args.append_cfa,
    )
    network = netmod.build(cfg, seed=args.seed, precision=args.precision)
    result = train.train_adam(
        network, dataset, steps=args.steps, lr=args.lr,
        batch_size=args.batch, seed=args.seed, loss=args.loss,
    )
    train_psnr = train.dataset_psnr(network, dataset)
    out = _outdir(args)
    netmod.save_checkpoint(network, os.path.join(out, "checkpoint"), step=result.steps)
    _write_json(
        os.path.join(out, "training.json"),
        {
            "config": {"d": cfg.d, "w": cfg.w, "B": cfg.B, "c_in": cfg.c_in, "c_out": cfg.c_out},
            "steps": result.steps,
            "lr": args.lr,
            "batch": args.batch,
            "loss": args.loss,
            "pattern": args.pattern,
            "noise": str(noise),
            "append_cfa": args.append_cfa,
            "final_loss": result.final_loss,
            "train_psnr": train_psnr,
            "loss_curve_tail": result.loss_curve[-10:],
        },
    )
    print(f"trained {result.steps} steps  final {args.loss} loss {result.final_loss:.6g}  train PSNR {train_psnr:.2f} dB")
    return 0


def _cmd_compare(args) -> int:
    from .harness import default_comparison_spec, report_table, run_comparison

    noise = _parse_noise(args.noise)
    spec = default_comparison_spec(
        patch=args.patch,
        train_count=args.train_count,
        test_count=args.test_count,
        steps=args.steps,
        batch_size=args.batch,
        lr=args.lr,
        seed=args.seed,
        pattern_name=args.pattern,
        noise=noise,
        append_cfa=args.append_cfa,
        loss=args.loss,
    )
    report = run_comparison(spec)
    out = _outdir(args)
    with open(os.path.join(out, "comparison.json"), "w") as fh:
        fh.write(report.to_json())
    rows = [a.to_dict() for a in report.arms]
    for row in rows:
        row["config"] = "d{d} w{w} B{B}".format(**row["config"])
        if row["test_psnr"] is not None:
            row["margin_db"] = row["test_psnr"] - report.baseline_psnr
    rows.append({"name": "bilinear", "config": "-", "test_psnr": report.baseline_psnr, "test_ssim": report.baseline_ssim})
    print(report_table(rows, columns=["name", "config", "flops_at_patch", "train_psnr", "test_psnr", "test_ssim", "margin_db"]), end="")
    gap = report.downsampled_minus_fullres_db
    print("downsampled minus fullres: " + (f"{gap:+.2f} dB" if gap is not None else "n/a (divergence)"))
    return 0


def _cmd_eval(args) -> int:
    from . import cfa, net as netmod
    from .harness import baseline_scores, evaluate_net, make_toy_dataset

    network, manifest = netmod.load_checkpoint(args.checkpoint)
    pattern = cfa.get_pattern(args.pattern)
    noise = _parse_noise(args.noise)
    append = network.config.c_in == 5
    if args.patch % network.config.d:
        raise ValueError(f"patch {args.patch} not divisible by checkpoint d={network.config.d}")
    dataset = make_toy_dataset(
        args.count, args.patch, seed=args.seed, pattern=pattern,
        noise=noise, append_cfa=append,
    )
    psnr, ssim = evaluate_net(network, dataset)
    base_psnr, base_ssim = baseline_scores(dataset, pattern)
    payload = {
        "checkpoint": os.path.abspath(args.checkpoint),
        "step": manifest.get("step", 0),
        "count": args.count,
        "patch": args.patch,
        "pattern": args.pattern,
        "noise": str(noise),
        "psnr": psnr,
        "ssim": ssim,
        "baseline_psnr": base_psnr,
        "baseline_ssim": base_ssim,
        "margin_db": psnr - base_psnr,
    }
    _write_json(os.path.join(_outdir(args), "eval.json"), payload)
    print(f"PSNR {psnr:.2f} dB  SSIM {ssim:.4f}  (bilinear {base_psnr:.2f} dB, margin {psnr - base_psnr:+.2f} dB)")
    return 0


def _cmd_report(args) -> int:
    from .harness import report_table
    from .search import read_sweep_csv

    path = args.input
    if path.endswith(".csv"):
        rows = read_sweep_csv(path)
    else:
        with open(path) as fh:
            payload = json.load(fh)
        if isinstance(payload, dict) and "arms" in payload:
            rows = list(payload["arms"])
            for row in rows:
                row["config"] = "d{d} w{w} B{B}".format(**row["config"])
            base = dict(payload["baseline"])
            base["name"] = "bilinear"
            rows.append(base)
        elif isinstance(payload, dict) and "frontier" in payload:
            rows = [
                {"rank": i + 1, **item["config"], "entropy": item["entropy"], "flops": item["flops"]}
                for i, item in enumerate(payload["frontier"])
            ]
        elif isinstance(payload, list):
            rows = [
                {**(cell.get("best") or {}), "status": cell["status"], "feasible": cell["feasible_count"]}
                for cell in payload
            ]
        else:
            rows = [payload]
    text = report_table(rows)
    print(text, end="")
    if args.out:
        out = _outdir(args)
        with open(os.path.join(out, "report.txt"), "w") as fh:
            fh.write(text)
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mosaicnet",
        description="Design, simulate and train downsampled demosaicing networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="solve one budget/ratio cell")
    p.add_argument("--budget-gflops", type=float, required=True, help="flop budget in gigaflops")
    p.add_argument("--rho", required=True, help="depth-to-width cap B <= rho*w, e.g. 1.0 or 6/5")
    _add_search_flags(p)
    _add_common(p)
    p.set_defaults(fn=_cmd_search)

    p = sub.add_parser("sweep", help="solve a grid of budget/ratio cells")
    p.add_argument("--budgets-gflops", default="25,128", help="comma list of budgets (default 25,128)")
    p.add_argument("--rhos", default="0.5,0.7,1.0,1.2,1.5", help="comma list of ratio caps")
    _add_search_flags(p)
    _add_common(p)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("flops", help="itemized analytical cost of one config")
    _add_config_flags(p)
    p.add_argument("--height", type=int, default=256, help="input height in pixels (default 256)")
    p.add_argument("--width", type=int, default=256, help="input width in pixels (default 256)")
    _add_common(p, out_default="")
    p.set_defaults(fn=_cmd_flops)

    p = sub.add_parser("entropy", help="entropy scores of one config")
    _add_config_flags(p)
    p.add_argument("--height", type=int, default=0, help="also score at this height (0 = skip)")
    p.add_argument("--width", type=int, default=0, help="resolution width (defaults to --height)")
    _add_common(p, out_default="")
    p.set_defaults(fn=_cmd_entropy)

    p = sub.add_parser("mosaic", help="sample an RGB image through a CFA")
    p.add_argument("--input", required=True, help="RGB image (.png or .tns, values in [0,1])")
    p.add_argument("--pattern", default="bayer", choices=("bayer", "quad", "nona", "hybridevs"))
    p.add_argument("--phase", default="0,0", help="pattern phase 'y,x' (default 0,0)")
    p.add_argument("--noise", default="none", help="none, iso400..iso3200, or 'gain,sigma'")
    p.add_argument("--append-cfa", action="store_true", help="also write the 5-channel network input")
    _add_common(p)
    p.set_defaults(fn=_cmd_mosaic)

    p = sub.add_parser("demosaic", help="classical bilinear demosaic of a raw mosaic")
    p.add_argument("--input", required=True, help="raw mosaic (.png grayscale or .tns)")
    p.add_argument("--pattern", default="bayer", choices=("bayer", "quad", "nona", "hybridevs"))
    p.add_argument("--phase", default="0,0", help="pattern phase 'y,x' (default 0,0)")
    _add_common(p)
    p.set_defaults(fn=_cmd_demosaic)

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward pass")
    p.add_argument("--trials", type=int, default=10, help="random cases per op (default 10)")
    p.add_argument("--tol", type=float, default=1e-5, help="max relative error (default 1e-5)")
    p.add_argument("--ops", default="", help="comma list of ops (default: all)")
    _add_common(p, out_default="")
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("train-toy", help="overfit a small net on procedural toy patches")
    _add_config_flags(p)
    p.add_argument("--steps", type=int, default=2000, help="optimizer steps (default 2000)")
    p.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate (default 1e-3)")
    p.add_argument("--batch", type=int, default=8, help="batch size (default 8)")
    p.add_argument("--patch", type=int, default=48, help="square patch size in pixels (default 48)")
    p.add_argument("--count", type=int, default=8, help="training patches (default 8)")
    p.add_argument("--pattern", default="bayer", choices=("bayer", "quad", "nona", "hybridevs"))
    p.add_argument("--noise", default="none", help="none, iso400..iso3200, or 'gain,sigma'")
    p.add_argument("--append-cfa", action="store_true", help="append the one-hot CFA planes (c_in=5)")
    p.add_argument("--loss", choices=("mse", "psnr"), default="mse")
    _add_common(p)
    p.set_defaults(fn=_cmd_train_toy)

    p = sub.add_parser("compare", help="FLOP-matched learned arms versus the bilinear baseline")
    p.add_argument("--patch", type=int, default=48, help="square patch size (default 48)")
    p.add_argument("--train-count", type=int, default=64, help="training patches (default 64)")
    p.add_argument("--test-count", type=int, default=16, help="held-out patches (default 16)")
    p.add_argument("--steps", type=int, default=3000, help="optimizer steps per arm (default 3000)")
    p.add_argument("--batch", type=int, default=8, help="batch size (default 8)")
    p.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate (default 1e-3)")
    p.add_argument("--pattern", default="bayer", choices=("bayer", "quad", "nona", "hybridevs"))
    p.add_argument("--noise", default="iso3200", help="none, iso400..iso3200, or 'gain,sigma' (default iso3200)")
    p.add_argument("--no-append-cfa", dest="append_cfa", action="store_false",
                   help="train on the bare raw plane (default appends CFA planes)")
    p.add_argument("--loss", choices=("mse", "psnr"), default="mse")
    _add_common(p)
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("eval", help="score a checkpoint on fresh toy data")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--count", type=int, default=16, help="evaluation patches (default 16)")
    p.add_argument("--patch", type=int, default=48, help="square patch size (default 48)")
    p.add_argument("--pattern", default="bayer", choices=("bayer", "quad", "nona", "hybridevs"))
    p.add_argument("--noise", default="none", help="none, iso400..iso3200, or 'gain,sigma'")
    _add_common(p)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("report", help="render a JSON/CSV artifact as a text table")
    p.add_argument("--input", required=True, help="search.json, sweep.csv/.json, comparison.json, ...")
    _add_common(p, out_default="")
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _set_threads(args.threads)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - one-line diagnostic, exit code 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
