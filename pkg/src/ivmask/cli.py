"""``ivmask`` command line: deploy, synth, train, eval, stats, fuse, gradcheck.

Every command prints ``key=value`` lines.  Exit codes: 0 ok, 1 usage error,
2 data or format error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from threadpoolctl import threadpool_limits

from . import io as ivio
from .deploy import METHODS, DeployStrategy, deploy
from .dwsl.config import PRESETS, TrainConfig, dump_config, load_config
from .dwsl.gradcheck import run_trials
from .dwsl.train import REGIMES, train_regime
from .errors import FormatError, IVMError, NumericalError, RecordIOError
from .eval import evaluate
from .fusion import FusionMethod, fuse
from .heatmap import area_ratio
from .synth import build_mixed_dataset, build_test_set

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(**pairs) -> None:
    for k, v in pairs.items():
        if isinstance(v, float):
            v = f"{v:.6g}"
        print(f"{k}={v}")


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise UsageError(message)


def _parse_rgb(text: str):
    t = text.lstrip("#")
    _require(len(t) == 6, f"--fill must be RRGGBB, got {text!r}")
    try:
        return tuple(int(t[i : i + 2], 16) for i in (0, 2, 4))
    except ValueError:
        raise UsageError(f"--fill must be RRGGBB, got {text!r}") from None


# --- commands -----------------------------------------------------------------


def cmd_deploy(args) -> int:
    _require(0.0 <= args.tau < 1.0, "--tau must be in [0, 1)")
    _require(args.sigma is None or args.sigma > 0, "--sigma must be > 0")
    strategy = DeployStrategy(args.method, args.crop, args.tau, _parse_rgb(args.fill), args.sigma)
    img = ivio.read_image(args.image)
    h = ivio.read_heatmap(args.heatmap)
    out = deploy(img, h, strategy)
    ivio.write_image(args.out, out)
    _emit(width=out.width, height=out.height, retained_area=area_ratio(h, args.tau))
    return EXIT_OK


def cmd_synth(args) -> int:
    _require(0.0 <= args.corruption <= 1.0, "--corruption must be in [0, 1]")
    _require(args.n_clean >= 1 and args.n_noisy >= 1, "--n-clean and --n-noisy must be >= 1")
    _require(args.n_test >= 0, "--n-test must be >= 0")
    ds = build_mixed_dataset(args.seed, args.n_clean, args.n_noisy, args.corruption)
    test = build_test_set(args.seed, args.n_test)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ivio.write_dataset(out, "e.jsonl", ds.clean)
    ivio.write_dataset(out, "o.jsonl", ds.mixed)
    ivio.write_dataset(out, "test.jsonl", test)
    n_corrupt = sum(not r.meta["is_clean"] for r in ds.mixed)
    _emit(n_clean=len(ds.clean), n_noisy=len(ds.mixed), n_corrupted=n_corrupt, n_test=len(test), out=out)
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    overrides = {
        "seed": args.seed,
        "stage1_steps": args.stage1_steps,
        "stage2_steps": args.stage2_steps,
        "lr": args.lr,
        "hidden": args.hidden,
    }
    if args.config:
        return load_config(args.config, **overrides)
    base = PRESETS[args.preset]
    return base.replace(**{k: v for k, v in overrides.items() if v is not None})


def cmd_train(args) -> int:
    try:
        cfg = _train_config(args)
    except (ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"bad config: {exc}") from exc
    data = Path(args.data)
    D_e = ivio.load_dataset(data / "e.jsonl")
    D_o = ivio.load_dataset(data / "o.jsonl") if args.regime != "sl-clean" else []
    res = train_regime(args.regime, D_e, D_o, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ivio.save_params(out / "generator.npy", res.generator)
    if res.discriminator is not None:
        ivio.save_params(out / "discriminator.npy", res.discriminator)
    ivio.write_history(out / "history.csv", res.history)
    dump_config(cfg, out / "config.toml")
    pairs = {"regime": args.regime, "seed": cfg.seed}
    for stage in (1, 2):
        rows = [r for r in res.history if r.stage == stage]
        if rows:
            pairs[f"final_loss_stage{stage}"] = rows[-1].loss
    _emit(**pairs)
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest = Path(args.manifest) if args.manifest else Path(args.data) / "test.jsonl"
    records = ivio.load_dataset(manifest)
    gen = ivio.load_generator(args.generator)
    report = evaluate(gen, records, regime=args.regime or "")
    if args.out:
        report.to_csv(args.out)
    _emit(records=len(report.rows), mean_iou=report.mean_iou, iou50_accuracy=report.iou50_accuracy)
    return EXIT_OK


def cmd_stats(args) -> int:
    _require(0.0 <= args.tau < 1.0, "--tau must be in [0, 1)")
    _require(args.bins >= 1, "--bins must be >= 1")
    manifests = [Path(m) for m in args.manifest]
    if args.data:
        manifests += [Path(args.data) / "e.jsonl", Path(args.data) / "o.jsonl"]
    _require(bool(manifests), "give --manifest or --data")
    records = [r for m in manifests for r in ivio.load_dataset(m)]
    for line in ivio.dataset_stats(records, args.tau, args.bins).lines():
        print(line)
    return EXIT_OK


def cmd_fuse(args) -> int:
    try:
        method = FusionMethod.parse(args.method)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    maps = [ivio.read_heatmap(p) for p in args.inputs]
    fused = fuse(maps, method)
    ivio.write_heatmap(args.out, fused)
    _emit(inputs=len(maps), width=fused.width, height=fused.height, method=method.kind)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    _require(args.trials >= 1, "--trials must be >= 1")
    err_g, err_d = run_trials(args.trials, args.seed, args.hidden)
    ok = err_g < GRADCHECK_TOL and err_d < GRADCHECK_TOL
    _emit(generator_max_rel_error=err_g, discriminator_max_rel_error=err_d, tolerance=GRADCHECK_TOL, ok=str(ok).lower())
    if not ok:
        raise NumericalError("gradient check exceeded tolerance")
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ivmask", description="Instruction-guided visual masking toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("deploy", help="mask an image with a heatmap")
    d.add_argument("--image", required=True)
    d.add_argument("--heatmap", required=True)
    d.add_argument("--method", choices=METHODS, default="overlay")
    d.add_argument("--crop", action="store_true")
    d.add_argument("--tau", type=float, default=0.0)
    d.add_argument("--fill", default="000000")
    d.add_argument("--sigma", type=float, default=None)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_deploy)

    s = sub.add_parser("synth", help="generate the synthetic benchmark")
    s.add_argument("--out", required=True)
    s.add_argument("--n-clean", type=int, default=50)
    s.add_argument("--n-noisy", type=int, default=5000)
    s.add_argument("--n-test", type=int, default=500)
    s.add_argument("--corruption", type=float, default=0.4)
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train one regime")
    t.add_argument("--data", required=True)
    t.add_argument("--config")
    t.add_argument("--preset", choices=sorted(PRESETS), default="toy")
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--regime", choices=REGIMES, default="dwsl")
    t.add_argument("--out", required=True)
    t.add_argument("--stage1-steps", type=int)
    t.add_argument("--stage2-steps", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--hidden", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="held-out IoU of a trained generator")
    e.add_argument("--data")
    e.add_argument("--manifest")
    e.add_argument("--generator", required=True)
    e.add_argument("--regime")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    st = sub.add_parser("stats", help="area-ratio histogram per source")
    st.add_argument("--manifest", action="append", default=[])
    st.add_argument("--data")
    st.add_argument("--tau", type=float, default=0.0)
    st.add_argument("--bins", type=int, default=10)
    st.set_defaults(func=cmd_stats)

    f = sub.add_parser("fuse", help="fuse expert heatmaps")
    f.add_argument("inputs", nargs="+")
    f.add_argument("--method", default="mean")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fuse)

    g = sub.add_parser("gradcheck", help="finite-difference check of both losses")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--trials", type=int, default=20)
    g.add_argument("--hidden", type=int, default=16)
    g.set_defaults(func=cmd_gradcheck)
    return p


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("IVM_THREADS", "1")))
    except ValueError:
        raise UsageError("IVM_THREADS must be an integer") from None


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "eval" and not (args.data or args.manifest):
            raise UsageError("give --data or --manifest")
        with threadpool_limits(limits=_threads()):
            return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FormatError, RecordIOError, OSError, IVMError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # remaining value errors come from data that passed flag validation
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
