"""Command line entry point: ``safesep {train,eval,ablate,density}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from safesep.doda import MODES
from safesep.errors import ConfigError
from safesep.harness.checkpoint import content_hash, load_checkpoint, save_checkpoint
from safesep.harness.config import ExperimentConfig, config_from_dict, load_config
from safesep.harness.results import format_table, write_results
from safesep.harness.runner import evaluate, train

log = logging.getLogger("safesep")

ABLATION_MODES = MODES
DENSITY_MODES = ("baseline", "da1do", "da2do")
DENSITY_LEVELS = ("high", "low")


def _csv(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def cmd_train(args) -> int:
    config = load_config(args.config)
    if args.episodes is not None:
        config.train_episodes = args.episodes
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    chash = config.hash()
    (out / "config.yaml").write_text(yaml.safe_dump(config.to_dict(), sort_keys=True))

    with open(out / "train_log.jsonl", "w") as fh:
        def record(rec):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            if (rec["episode"] + 1) % args.log_every == 0:
                log.info("episode %d  rolling score %.2f", rec["episode"] + 1, rec["rolling_score"])
        result = train(config, args.seed, record)

    meta = {"episodes": config.train_episodes}
    h_final = save_checkpoint(out / "checkpoint_final.json", result.final, chash, args.seed, config.to_dict(), meta)
    h_best = save_checkpoint(out / "checkpoint_best.json", result.best, chash, args.seed, config.to_dict(),
                             {**meta, "best_rolling": result.best_rolling})
    print(f"final checkpoint {out / 'checkpoint_final.json'} [{h_final}]")
    print(f"best checkpoint  {out / 'checkpoint_best.json'} [{h_best}] rolling={result.best_rolling}")
    return 0


def _load_for_eval(args) -> tuple[ExperimentConfig, object, str]:
    params, raw = load_checkpoint(args.checkpoint)
    if args.config is not None:
        config = load_config(args.config)
    elif raw.get("config"):
        config = config_from_dict(raw["config"])
    else:
        config = load_config()
    if tuple(params.layer_sizes) != config.layer_sizes():
        raise ConfigError(
            f"checkpoint layer sizes {params.layer_sizes} do not match config {config.layer_sizes()}")
    return config, params, content_hash(args.checkpoint)


def _run_grid(args, cases, modes, densities, name: str) -> int:
    config, params, chash = _load_for_eval(args)
    episodes = args.episodes if args.episodes is not None else config.eval_episodes
    for d in densities:
        config.interval(d)

    def progress(row):
        log.info("%s %s %-8s mean %.2f std %.2f", row.case, row.density, row.mode, row.mean_score, row.std_score)

    rows, details = evaluate(config, params, cases, modes, densities, episodes, args.seed, chash, progress)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = write_results(rows, out / f"{name}.csv", details)
    print(format_table(rows))
    print(f"wrote {path}")
    return 0


def cmd_eval(args) -> int:
    cases = _csv(args.cases) if args.cases else None
    modes = _csv(args.modes) if args.modes else None
    config, _, _ = _load_for_eval(args)
    return _run_grid(args, cases or list(config.eval_cases), modes or list(config.modes), [args.density], "eval")


def cmd_ablate(args) -> int:
    config, _, _ = _load_for_eval(args)
    cases = _csv(args.cases) if args.cases else list(config.eval_cases)
    return _run_grid(args, cases, list(ABLATION_MODES), ["default"], "ablate")


def cmd_density(args) -> int:
    config, _, _ = _load_for_eval(args)
    cases = _csv(args.cases) if args.cases else list(config.eval_cases)
    return _run_grid(args, cases, list(DENSITY_MODES), list(DENSITY_LEVELS), "density")


def _eval_args(p: argparse.ArgumentParser, with_grid: bool) -> None:
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", default=None, help="YAML config; defaults to the one stored in the checkpoint")
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results")
    p.add_argument("--cases", default=None, help="comma-separated subset of B,C,D")
    if with_grid:
        p.add_argument("--modes", default=None, help=f"comma-separated subset of {','.join(MODES)}")
        p.add_argument("--density", default="default")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="safesep", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the shared policy with PPO on case A")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--episodes", type=int, default=None, help="override the training budget")
    p.add_argument("--log-every", type=int, default=100)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint under selected modes")
    _eval_args(p, with_grid=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="all six modes on the evaluation cases at default density")
    _eval_args(p, with_grid=False)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("density", help="baseline and combined modes at high and low density")
    _eval_args(p, with_grid=False)
    p.set_defaults(func=cmd_density)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
