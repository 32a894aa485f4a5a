"""``shieldsynth`` command line: synth, eval, fidelity, report.

Exit codes: 0 success, 1 synthesis or evaluation failure, 2 usage or
configuration error.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .config import RunConfig
from .errors import ContractError, ParseError, ShieldSynthError
from .shield import Shield

log = logging.getLogger("shieldsynth")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p):
    p.add_argument("--env", help="benchmark name (overrides the config)")
    p.add_argument("--config", type=Path, help="run configuration JSON")
    p.add_argument("--seed", type=int, help="run seed (overrides the config)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--threads", type=int, default=1, help="evaluation threads")
    p.add_argument("--linearize-at", choices=["equilibrium", "random"])


def build_parser():
    ap = _Parser(prog="shieldsynth", description="Synthesize and evaluate runtime shields.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="linearize, synthesize the backup gain, tune the threshold")
    _common(p)
    p.add_argument("--ablate", choices=pipeline.ABLATIONS, default="none")
    p.add_argument("--refine-mode", choices=["uniform", "ars"])
    p.add_argument("--episodes", type=int, help="episodes per threshold evaluation")
    p.add_argument("--steps", type=int, help="steps per threshold evaluation episode")

    p = sub.add_parser("eval", help="evaluate a shield against the unshielded policy")
    _common(p)
    p.add_argument("--shield", type=Path, help="shield JSON (default: <out>/<env>.shield.json)")
    p.add_argument("--ablate", choices=pipeline.ABLATIONS, default="none")
    p.add_argument("--episodes", type=int)
    p.add_argument("--steps", type=int)

    p = sub.add_parser("fidelity", help="model-vs-true MSE of the linearization")
    _common(p)
    p.add_argument("--steps", type=int, default=5000)

    p = sub.add_parser("report", help="aggregate evaluation summaries into a Markdown table")
    p.add_argument("--out", type=Path, default=Path("out"))
    return ap


def load_config(args):
    overrides = {"env": args.env, "seed": args.seed}
    if args.config is not None:
        cfg = RunConfig.load(args.config, **overrides)
    elif args.env is None:
        raise UsageError("either --env or --config is required")
    else:
        cfg = RunConfig.from_dict({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "linearize_at", None):
        cfg.linearize = dict(cfg.linearize, at=args.linearize_at)
    if getattr(args, "refine_mode", None):
        cfg.refine = dict(cfg.refine, mode=args.refine_mode)
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    return cfg


def _stem(cfg, ablate="none"):
    return cfg.env if ablate == "none" else f"{cfg.env}.{ablate}"


def cmd_synth(args):
    cfg = load_config(args)
    bo = dict(cfg.bo, threads=args.threads)
    if args.episodes:
        bo["eval_episodes"] = args.episodes
    if args.steps:
        bo["eval_steps"] = args.steps
    cfg.bo = bo
    args.out.mkdir(parents=True, exist_ok=True)
    stem = _stem(cfg, args.ablate)
    log_path = args.out / f"{stem}.synth.jsonl"
    log_path.write_text("")
    result = pipeline.synthesize(cfg, args.ablate, log_path=log_path)
    paths = pipeline.write_synth_outputs(result, args.out, stem)
    pipeline.append_jsonl(log_path, pipeline.summary_record(result))
    print(f"{cfg.env}: lambda={result.shield.lam:.6g} iterations={result.iterations} "
          f"time={result.synthesis_seconds:.2f}s -> {paths['shield']}")
    return EXIT_OK


def cmd_eval(args):
    cfg = load_config(args)
    path = args.shield or args.out / f"{cfg.env}.shield.json"
    try:
        sh = Shield.load(path)
    except OSError as exc:
        raise UsageError(f"cannot read shield {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed shield {path}: {exc}") from None
    setup = pipeline.build(cfg)
    if sh.state_dim != setup.env.state_dim or sh.command_dim != setup.env.command_dim:
        raise UsageError(f"shield {path} does not match {cfg.env}")
    sh = pipeline.apply_ablation(cfg, setup, sh, args.ablate)
    args.out.mkdir(parents=True, exist_ok=True)
    stem = _stem(cfg, args.ablate)
    synth_seconds = sh.provenance.get("synthesis_seconds")
    for shielded in (True, False):
        rep = pipeline.run_eval(cfg, sh, setup, shielded, args.threads, args.episodes, args.steps)
        tag = "shielded" if shielded else "unshielded"
        summary = dict(env=cfg.env, variant=args.ablate if shielded else "unshielded",
                       seed=cfg.seed, **rep.summary())
        if shielded:
            summary.update(lam=sh.lam, synthesis_seconds=synth_seconds)
        base = f"{stem}.eval.{tag}"
        (args.out / f"{base}.csv").write_text(rep.to_csv())
        (args.out / f"{base}.json").write_text(json.dumps(summary, indent=2))
        print(f"{cfg.env} [{summary['variant']}]: violations {rep.violations}/{rep.episodes}, "
              f"interventions {rep.interventions}")
    return EXIT_OK


def cmd_fidelity(args):
    cfg = load_config(args)
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    out = pipeline.fidelity(cfg, args.steps)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / f"{cfg.env}.fidelity.json").write_text(json.dumps(out, indent=2))
    print(f"{cfg.env}: mse_random={out['mse_random']:.3e} mse_equilibrium={out['mse_equilibrium']:.3e}")
    return EXIT_OK


REPORT_COLUMNS = [
    ("env", "env", "{}"), ("variant", "variant", "{}"), ("episodes", "episodes", "{}"),
    ("violations", "violations", "{}"), ("interventions", "interventions", "{}"),
    ("necessary_ratio", "necessary ratio", "{:.3f}"),
    ("shield_time_ns_per_step", "shield ns/step", "{:.1f}"),
    ("mean_steps_to_steady", "steps to steady", "{:.1f}"),
    ("synthesis_seconds", "synthesis s", "{:.2f}"),
]


def render_report(rows):
    head = "| " + " | ".join(title for _, title, _ in REPORT_COLUMNS) + " |"
    rule = "|" + "---|" * len(REPORT_COLUMNS)
    lines = [head, rule]
    for row in sorted(rows, key=lambda r: (r.get("env", ""), r.get("variant", ""))):
        cells = []
        for key, _, fmt in REPORT_COLUMNS:
            v = row.get(key)
            cells.append("-" if v is None else fmt.format(v))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def cmd_report(args):
    files = sorted(args.out.glob("*.eval.*.json"))
    if not files:
        raise UsageError(f"no evaluation summaries in {args.out}")
    rows, seen = [], set()
    for f in files:
        try:
            row = json.loads(f.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"malformed summary {f}: {exc}") from None
        # every ablation run re-evaluates the same unshielded baseline
        key = (row.get("env"), row.get("variant"), row.get("seed"))
        if key not in seen:
            seen.add(key)
            rows.append(row)
    table = render_report(rows)
    (args.out / "report.md").write_text(table)
    print(table, end="")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "eval": cmd_eval, "fidelity": cmd_fidelity, "report": cmd_report}


def main(argv=None):
    level = os.environ.get("SHIELDSYNTH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except (UsageError, ContractError, ParseError) as exc:
        print(f"shieldsynth: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ShieldSynthError as exc:
        print(f"shieldsynth: failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
