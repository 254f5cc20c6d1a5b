"""``stereoattn`` command line: flops, check, traj, train, sample, bench.

Exit codes: 0 success, 1 a property or comparison failed, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, fields
from typing import List, Optional, Sequence

from .bench import bench_csv, run_bench, worker_count
from .camera import sample_trajectory, trajectory_to_json
from .checks import FAULTS, SUITES, run_suite
from .container import atomic_write_bytes, save_tensor
from .dit import TrainConfig, TrainState, heldout_scenes, sample, train
from .flops import ShapeSpec, flops_decomposed, reports_to_csv, with_empirical
from .kernels import make_rng
from .rope import RopeConfig

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SUBCOMMANDS = ("flops", "check", "traj", "train", "sample", "bench")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Validated settings of one invocation."""
    subcommand: str
    seed: int = 0
    shape: Optional[ShapeSpec] = None
    rope: Optional[RopeConfig] = None
    mode: str = "stereo"
    out: Optional[str] = None
    format: str = "json"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise UsageError(f"unknown subcommand {self.subcommand!r}")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed must lie in [0, 2**64)")
        if self.mode not in ("stereo", "full4d"):
            raise UsageError("mode must be stereo or full4d")
        if self.format not in ("json", "csv"):
            raise UsageError("format must be json or csv")

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise UsageError(f"unknown run config keys {unknown}")
        doc = dict(doc)
        if isinstance(doc.get("shape"), dict):
            doc["shape"] = _shape(**doc["shape"])
        if isinstance(doc.get("rope"), dict):
            try:
                doc["rope"] = RopeConfig.from_dict(doc["rope"])
            except (TypeError, ValueError) as e:
                raise UsageError(f"invalid rope config: {e}") from None
        return cls(**doc)


def _shape(**kw) -> ShapeSpec:
    try:
        return ShapeSpec(**{k: int(v) for k, v in kw.items()})
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid shape: {e}") from None


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        atomic_write_bytes(out, text.encode())
    else:
        sys.stdout.write(text)


def _load_train_config(path: Optional[str]) -> TrainConfig:
    if path is None:
        return TrainConfig()
    try:
        with open(path) as fh:
            return TrainConfig.from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as e:
        raise UsageError(f"bad train config {path}: {e}") from None


# -- subcommands -------------------------------------------------------------------------

def cmd_flops(run: RunConfig) -> int:
    d_c = run.rope.d_c if run.rope else 0
    rep = flops_decomposed(run.shape, d_c)
    if run.extra.get("empirical"):
        with_empirical(rep)
    text = rep.to_json() + "\n" if run.format == "json" else reports_to_csv([rep])
    _emit(text, run.out)
    return EXIT_OK


def cmd_check(run: RunConfig) -> int:
    suite = run.extra["suite"]
    if suite not in SUITES:
        raise UsageError(f"unknown suite {suite!r}; choose from {', '.join(sorted(SUITES))}")
    results = run_suite(suite, run.seed, run.extra.get("faults", ()))
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{suite}: {len(results) - len(failed)}/{len(results)} properties passed")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_traj(run: RunConfig) -> int:
    n = run.extra["n_frames"]
    if n < 2:
        raise UsageError("--n-frames must be at least 2")
    traj = sample_trajectory(make_rng(run.seed), n)
    _emit(trajectory_to_json(traj, run.extra["baseline"]) + "\n", run.out)
    return EXIT_OK


def cmd_train(run: RunConfig) -> int:
    if run.extra.get("resume"):
        state = TrainState.load(run.extra["resume"])
        if run.extra.get("config"):
            wanted = _load_train_config(run.extra["config"])
            if wanted.to_dict() != state.config.to_dict():
                raise UsageError("--config differs from the checkpoint's config")
    else:
        state = TrainState.fresh(_load_train_config(run.extra.get("config")))
    records: List[str] = []
    log_path = run.extra.get("log")

    def log(rec):
        line = json.dumps(rec)
        records.append(line)
        if run.extra.get("verbose"):
            print(line, flush=True)

    try:
        train(state, run.extra.get("steps"), log)
    finally:
        if log_path:
            prior = ""
            if run.extra.get("resume") and os.path.exists(log_path):
                with open(log_path) as fh:
                    prior = fh.read()
            atomic_write_bytes(log_path, (prior + "".join(r + "\n" for r in records)).encode())
        if run.out:
            state.save(run.out)
    print(f"trained to step {state.step}" + (f"; checkpoint {run.out}" if run.out else ""))
    return EXIT_OK


def cmd_sample(run: RunConfig) -> int:
    state = TrainState.load(run.extra["checkpoint"])
    cfg = state.config
    scene = heldout_scenes(cfg, run.extra["scene"] + 1)[-1]
    cams = scene.cameras(cfg.model.policy)
    gen = sample(state.model, scene.video[:, 0], cams, run.extra["steps"], make_rng(run.seed, 5), run.mode)
    if run.out:
        save_tensor(run.out, gen)
        if run.extra.get("cameras_out"):
            save_tensor(run.extra["cameras_out"], cams)
    print(f"generated {tuple(gen.shape)} with {run.mode} attention" + (f" -> {run.out}" if run.out else ""))
    return EXIT_OK


def cmd_bench(run: RunConfig) -> int:
    shapes = run.extra.get("shapes") or None
    rows = run_bench(shapes, repeats=run.extra["repeats"], seed=run.seed, workers=worker_count())
    _emit(bench_csv(rows), run.out)
    return EXIT_OK


COMMANDS = {"flops": cmd_flops, "check": cmd_check, "traj": cmd_traj, "train": cmd_train,
            "sample": cmd_sample, "bench": cmd_bench}


# -- argument parsing ----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _shape_arg(text: str) -> ShapeSpec:
    parts = text.split(",")
    if len(parts) != 5:
        raise argparse.ArgumentTypeError("shape is B,F,H,W,D")
    try:
        return ShapeSpec(*(int(p) for p in parts))
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stereoattn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="subcommand", parser_class=_Parser)
    sub.required = True

    f = sub.add_parser("flops", help="analytic (and optionally measured) attention FLOPs")
    for name in "bfhwd":
        f.add_argument(f"--{name}", type=int, required=True)
    f.add_argument("--d-c", type=int, default=0, help="camera dims added to the score product")
    f.add_argument("--format", choices=("json", "csv"), default="json")
    f.add_argument("--empirical", action="store_true", help="also run instrumented single-head passes")
    f.add_argument("--out")

    c = sub.add_parser("check", help="run a named property suite")
    c.add_argument("--suite", required=True)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--inject-fault", action="append", default=[], choices=FAULTS,
                   help="swap in a deliberately broken implementation")

    t = sub.add_parser("traj", help="sample a camera trajectory as JSON")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--n-frames", type=int, default=49)
    t.add_argument("--baseline", type=float, default=0.063)
    t.add_argument("--out")

    tr = sub.add_parser("train", help="train the toy model on synthetic stereo scenes")
    tr.add_argument("--config", help="TrainConfig JSON; defaults when omitted")
    tr.add_argument("--out", help="checkpoint archive to write")
    tr.add_argument("--log", help="JSON-lines training log")
    tr.add_argument("--resume", help="checkpoint to continue from")
    tr.add_argument("--steps", type=int, help="train up to this total step count")
    tr.add_argument("--verbose", action="store_true")

    s = sub.add_parser("sample", help="generate a stereo latent video from a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--mode", choices=("stereo", "full4d"), default="stereo")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scene", type=int, default=0, help="held-out scene index supplying frame 0 and cameras")
    s.add_argument("--steps", type=int, default=20)
    s.add_argument("--out")
    s.add_argument("--cameras-out")

    b = sub.add_parser("bench", help="time 4-D versus stereo attention over a shape sweep")
    b.add_argument("--shape", type=_shape_arg, action="append", dest="shapes", help="B,F,H,W,D (repeatable)")
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    return p


def run_config_from_args(ns: argparse.Namespace) -> RunConfig:
    extra = {k: v for k, v in vars(ns).items()
             if k not in ("subcommand", "seed", "mode", "out", "format", "b", "f", "h", "w", "d", "d_c")}
    shape = rope = None
    if ns.subcommand == "flops":
        shape = _shape(b=ns.b, f=ns.f, h=ns.h, w=ns.w, d=ns.d)
        if ns.d_c < 0 or ns.d_c % 4:
            raise UsageError("--d-c must be a non-negative multiple of 4")
        rope = RopeConfig(d=ns.d, d_c=ns.d_c) if ns.d >= 6 and ns.d % 2 == 0 else None
        if ns.d_c and rope is None:
            raise UsageError("--d-c needs an even --d of at least 6")
    if ns.subcommand == "check":
        extra["faults"] = tuple(extra.pop("inject_fault"))
    if ns.subcommand == "sample" and (ns.steps < 1 or ns.scene < 0):
        raise UsageError("--steps must be positive and --scene non-negative")
    if ns.subcommand == "bench" and ns.repeats < 1:
        raise UsageError("--repeats must be positive")
    if ns.subcommand == "train" and ns.steps is not None and ns.steps < 0:
        raise UsageError("--steps must be non-negative")
    return RunConfig(ns.subcommand, getattr(ns, "seed", 0), shape, rope, getattr(ns, "mode", "stereo"),
                     getattr(ns, "out", None), getattr(ns, "format", "json"), extra)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        run = run_config_from_args(ns)
        worker_count()
        return COMMANDS[run.subcommand](run)
    except UsageError as e:
        print(f"stereoattn: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as e:
        print(f"stereoattn: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
