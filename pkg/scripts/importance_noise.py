"""Permutation importance on synthetic runs, with a pure-noise control column.

    python3 scripts/importance_noise.py --seeds 0 1 --n-ads 2000 --out runs/importance
"""
import argparse
import json
import logging
import time
from dataclasses import replace
from pathlib import Path

from fakeads import ensemble as E
from fakeads import eval as ev
from fakeads import pipeline, synth
from fakeads.config import PipelineConfig
from fakeads.featurize import Featurizer


def one_seed(seed, n_ads, roster=None):
    cfg = PipelineConfig().with_seed(seed)
    cfg.synth = replace(cfg.synth, n_ads=n_ads)
    if roster:
        cfg.roster = tuple(roster)
    data = synth.generate_corpus(cfg.synth)
    records, *_ = pipeline.records_from_raw(data.ads, data.gazetteer, data.labels, None, cfg.ranges, cfg.dedup)
    train, test = pipeline.split_records(records, cfg.split.test_fraction, seed)
    fz = Featurizer(cfg.featurizer)
    Xtr = ev.with_noise_column(fz.fit_transform(train), seed=seed)
    Xte = ev.with_noise_column(fz.transform(test), seed=seed + 10_000)
    t0 = time.perf_counter()
    ens = E.train_stack(Xtr, pipeline.label_vector(train), cfg.stack_config())
    fit_s = time.perf_counter() - t0
    rep = ev.permutation_importance(ens, Xte, pipeline.label_vector(test), n_shuffles=5, seed=seed)
    return ens, rep, fit_s


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--n-ads", type=int, default=2000)
    ap.add_argument("--roster", nargs="*", help="preset names (default: full roster)")
    ap.add_argument("--out", default="runs/importance")
    ap.add_argument("-v", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.v else logging.WARNING)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed in args.seeds:
        ens, rep, fit_s = one_seed(seed, args.n_ads, args.roster)
        print(f"seed {seed}: fit {fit_s:.1f}s, final {ens.chosen_final}, baseline accuracy {rep.baseline_accuracy:.4f}")
        print(ev.importance_table(rep))
        print(ev.leaderboard_table(ens))
        (out / f"importance_seed{seed}.json").write_text(json.dumps(rep.as_dict(), indent=2) + "\n")


if __name__ == "__main__":
    main()
