"""Command line entry point: ``knowsr {train,campaign,report,verify}``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import kernels
from .config import load_config
from .errors import ConfigError, NumericError
from .harness import (CampaignError, compare_variants, emit_plot_data, load_campaign_records,
                      plot_curves, render_table, run_campaign, run_single, summarize,
                      write_metrics, write_summary, write_timing, metrics_filename)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("knowsr")


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.out)
    variant = cfg.variants[0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "checkpoints" if cfg.train.checkpoint_every else None
    records = run_single(cfg.env, cfg.train, variant.schedule, args.seed, cfg.episodes, ckpt)
    write_metrics(out / metrics_filename(variant.name, args.seed), records)
    write_timing(out / f"{variant.name}__seed{args.seed}.timing.csv", records)
    print(f"{variant.name} seed {args.seed}: {len(records)} episodes, "
          f"final avg step reward {records[-1].avg_step_reward:.4f}")
    return EXIT_OK


def cmd_campaign(args) -> int:
    cfg = load_config(args.config, args.out)
    result = run_campaign(cfg, workers=args.workers)
    if len(result.summaries) >= 2:
        print(render_table(compare_variants(result.summaries)))
    else:
        s = result.summaries[0]
        print(f"{s.variant}: mean avg step reward {s.mean_step_reward:.4f}, first best {s.first_best_episode}")
    return EXIT_OK


def cmd_report(args) -> int:
    in_dir = Path(args.inp)
    meta_path = in_dir / "campaign.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    camp = meta.get("campaign", {})
    window = camp.get("smoothing_window", 100)
    tol = camp.get("tolerance_fraction", 0.02)
    starts = {v["name"]: (None if v.get("share_steps", 0) == 0 else v.get("share_start_episode"))
              for v in camp.get("variants", [])}
    records = load_campaign_records(in_dir)
    if not records:
        raise ConfigError(f"no metrics found under {in_dir / 'metrics'}")
    summaries = [summarize(name, recs, window, tol, starts.get(name)) for name, recs in records.items()]
    write_summary(in_dir / "summary.csv", summaries)
    if args.table:
        if len(summaries) >= 2:
            print(render_table(compare_variants(summaries)))
        else:
            print(f"only one variant ({summaries[0].variant}); nothing to compare")
    if args.plots:
        plot_dir = in_dir / "plots"
        for name, recs in records.items():
            emit_plot_data(recs, plot_dir, name, window, starts.get(name))
        png = plot_curves(plot_dir, plot_dir / "learning_curves.png")
        print(f"plot data written to {plot_dir}" + (f"; figure {png}" if png else ""))
    return EXIT_OK


def cmd_verify(args) -> int:
    from .gradcheck import REL_TOL, run_suite

    results = run_suite(n_nets=args.nets, seed=args.seed)
    ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        ok &= r.passed
        print(f"{status}  {r.name:<18} max rel err {r.max_rel_error:.3e}  (tol {REL_TOL:g}, {r.n_nets} nets)")
    print(f"kernel backend: {kernels.backend()}")
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="knowsr", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="one seeded training run")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("campaign", help="all variants x seeds from a config")
    c.add_argument("--config", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--workers", type=int, default=None, help="default: KNOWSR_THREADS or CPU count")
    c.set_defaults(func=cmd_campaign)

    r = sub.add_parser("report", help="tables and plot data from a campaign directory")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--table", action="store_true")
    r.add_argument("--plots", action="store_true")
    r.set_defaults(func=cmd_report)

    v = sub.add_parser("verify", help="finite-difference gradient suite")
    v.add_argument("--nets", type=int, default=20)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CampaignError as exc:
        cause = exc.__cause__
        print(f"{exc}", file=sys.stderr)
        if isinstance(cause, ConfigError):
            return EXIT_CONFIG
        if isinstance(cause, NumericError):
            return EXIT_NUMERIC
        return 1


if __name__ == "__main__":
    sys.exit(main())
