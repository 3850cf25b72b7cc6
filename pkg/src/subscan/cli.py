"""Command-line interface.

    subscan generate  --config run.json --out DIR       scenario files
    subscan plan      --config run.json --out DIR       single trial
    subscan campaign  --config run.json --out DIR       multi-seed grid
    subscan eval      --posterior P.json ... --out DIR  metrics from a snapshot

Exit codes: 0 success, 2 configuration/input error, 3 numerical failure.
"""

import argparse
import datetime
import json
import sys
from pathlib import Path

from . import __version__, campaign as campaign_mod, hilbert_map as hm
from . import metrics as metrics_mod, scenario as scenario_mod
from .config import RunConfig
from .errors import ConfigError, NumericalError


def _load_config(path, overrides):
    if path is None:
        config, backend = RunConfig().validate(), None
    else:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
        config, backend = campaign_mod.config_from_manifest_or_config(data)
    if overrides.planner:
        config.planners = [overrides.planner]
    if overrides.budget is not None:
        config.budget = overrides.budget
        config.budgets = {}
    if getattr(overrides, "seed", None) is not None:
        config.seeds = [overrides.seed]
    return config.validate(), backend


def _default_out():
    stamp = datetime.datetime.now().strftime("%Y%m%d-%H%M%S")
    return Path("runs") / stamp


def _cmd_generate(args):
    config, _ = _load_config(args.config, args)
    out = Path(args.out or _default_out())
    out.mkdir(parents=True, exist_ok=True)
    factory = campaign_mod.ScenarioFactory(config)
    seed = config.seeds[0]
    bundle = factory.bundle(seed)
    scenario_mod.save_labeled_point_cloud(out / "anatomy.csv", bundle.anatomy)
    descriptor = {
        "meta": bundle.meta,
        "bounds": bundle.anatomy.bounds.tolist(),
        "n_points": bundle.anatomy.n_points,
        "n_tumor_points": int(bundle.anatomy.tumor_mask.sum()),
        "workspace_size": len(bundle.workspace),
        "trial_seed": seed,
        "config": config.to_dict(),
    }
    with open(out / "scenario.json", "w") as fh:
        json.dump(descriptor, fh, indent=2)
    print(f"wrote {out}/anatomy.csv and {out}/scenario.json")
    return 0


def _cmd_plan(args):
    config, backend = _load_config(args.config, args)
    out = Path(args.out or _default_out())
    out.mkdir(parents=True, exist_ok=True)
    planner_name = config.planners[0]
    seed = config.seeds[0]
    factory = campaign_mod.ScenarioFactory(config)
    bundle = factory.bundle(seed)
    trace = campaign_mod.run_trial(config, bundle, planner_name, seed)
    campaign_mod.write_trace_csv(out / "trace.csv", trace)
    if trace.final_posterior is not None:
        grid = config.map.make_grid(bundle.anatomy.bounds)
        hm.save_posterior(out / "posterior.json", grid, trace.final_posterior)
    result = {
        "planner": planner_name,
        "seed": seed,
        "iterations": trace.iterations,
        "poses_to_detection": trace.poses_to_detection,
        "final_coverage": trace.coverage[-1],
        "final_auprc": None if trace.auprc is None else trace.auprc[-1],
        "repeat_count": trace.repeat_count,
    }
    with open(out / "metrics.json", "w") as fh:
        json.dump(result, fh, indent=2)
    print(json.dumps(result))
    return 0


def _cmd_campaign(args):
    config, manifest_backend = _load_config(args.config, args)
    out = Path(args.out or _default_out())
    campaign_mod.run_campaign(
        config, out, backend=manifest_backend,
        echo=print if args.verbose else None,
    )
    print(f"campaign complete: {out}/summary.json")
    return 0


def _parse_slice(spec):
    try:
        axis, offset = spec.split("=", 1)
        return axis.strip(), float(offset)
    except ValueError:
        raise ConfigError(
            f"bad --slice {spec!r}; expected the form z=1.25"
        ) from None


def _cmd_eval(args):
    config, _ = _load_config(args.config, args)
    out = Path(args.out or _default_out())
    out.mkdir(parents=True, exist_ok=True)
    grid, posterior = hm.load_posterior(args.posterior)
    factory = campaign_mod.ScenarioFactory(config)
    bundle = factory.bundle(config.seeds[0])
    lattice = config.eval.make_lattice(bundle.anatomy.bounds)
    labels = bundle.anatomy.label_points(lattice)
    curve = metrics_mod.evaluate_map(posterior, grid, lattice, labels)
    metrics_mod.write_pr_csv(out / "pr_curve.csv", curve)
    payload = {"auprc": curve.auprc, "n_eval_points": int(lattice.shape[0]),
               "positive_ratio": float(labels.mean())}
    if args.slice:
        axis, offset = _parse_slice(args.slice)
        campaign_mod.emit_occupancy_slices(
            posterior, grid, axis, offset, bundle.anatomy.bounds,
            path=out / f"slice_{axis}_{offset}.csv",
        )
        payload["slice"] = f"{axis}={offset}"
    with open(out / "metrics.json", "w") as fh:
        json.dump(payload, fh, indent=2)
    print(json.dumps(payload))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="subscan",
        description="Plan sensing-pose sequences for subsurface target mapping.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="run config or manifest JSON")
        p.add_argument("--out", help="output directory")
        p.add_argument("--planner", choices=["bo", "random", "multires"])
        p.add_argument("--budget", type=int)
        if seed:
            p.add_argument("--seed", type=int)

    p_gen = sub.add_parser("generate", help="write scenario files")
    common(p_gen)
    p_gen.set_defaults(func=_cmd_generate)

    p_plan = sub.add_parser("plan", help="run a single planning trial")
    common(p_plan)
    p_plan.set_defaults(func=_cmd_plan)

    p_camp = sub.add_parser("campaign", help="run the full seed x planner grid")
    common(p_camp, seed=False)
    p_camp.add_argument("--verbose", action="store_true")
    p_camp.set_defaults(func=_cmd_campaign, seed=None)

    p_eval = sub.add_parser("eval", help="evaluate a saved posterior snapshot")
    common(p_eval)
    p_eval.add_argument("--posterior", required=True)
    p_eval.add_argument("--slice", help="occupancy slice, e.g. z=1.25")
    p_eval.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
