"""Multi-seed end-to-end runs on the synthetic corpus, with a text-only comparison.

    python3 scripts/run_synthetic.py --seeds 0 1 2 3 4 --out runs/synthetic
"""
import argparse
import json
import logging
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from fakeads import ensemble as E
from fakeads import eval as ev
from fakeads import pipeline, synth
from fakeads.config import PipelineConfig
from fakeads.featurize import BASIC, REFINED, SPATIAL, Featurizer

TEXT_ONLY = [SPATIAL, REFINED, BASIC]


def one_seed(seed, n_ads, roster=None, text_only=True):
    t0 = time.perf_counter()
    cfg = PipelineConfig().with_seed(seed)
    cfg.synth = replace(cfg.synth, n_ads=n_ads)
    if roster:
        cfg.roster = tuple(roster)
    data = synth.generate_corpus(cfg.synth)
    records, ext, cleaning, _ = pipeline.records_from_raw(data.ads, data.gazetteer, data.labels, None,
                                                         cfg.ranges, cfg.dedup)
    train, test = pipeline.split_records(records, cfg.split.test_fraction, seed)
    fz = Featurizer(cfg.featurizer)
    Xtr, Xte = fz.fit_transform(train), fz.transform(test)
    ytr, yte = pipeline.label_vector(train), pipeline.label_vector(test)
    ens = E.train_stack(Xtr, ytr, cfg.stack_config())
    full = ev.evaluate(E.predict(ens, Xte)[0], yte)
    out = {"seed": seed, "records": len(records), "dropped_extract": len(ext.dropped),
           "dropped_clean": cleaning.n_input - cleaning.kept, "chosen_final": ens.chosen_final,
           "val_scores": ens.val_scores, "full": full.as_dict(), "seconds": time.perf_counter() - t0}
    if text_only:
        ens_t = E.train_stack(Xtr.drop_tags(TEXT_ONLY), ytr, cfg.stack_config())
        out["text_only"] = ev.evaluate(E.predict(ens_t, Xte.drop_tags(TEXT_ONLY))[0], yte).as_dict()
    return ens, full, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--n-ads", type=int, default=2000)
    ap.add_argument("--roster", nargs="*", help="preset names (default: full roster)")
    ap.add_argument("--no-text-only", action="store_true", help="skip the text-only stack")
    ap.add_argument("--out", default="runs/synthetic")
    ap.add_argument("-v", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.v else logging.WARNING)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports, summary = {}, []
    for seed in args.seeds:
        ens, full, row = one_seed(seed, args.n_ads, args.roster, not args.no_text_only)
        reports[f"seed {seed}"] = full
        summary.append(row)
        text = row.get("text_only", {}).get("accuracy")
        print(f"seed {seed}: {row['seconds']:.0f}s, final {ens.chosen_final}, accuracy {full.accuracy:.4f}"
              + (f", text-only {text:.4f}" if text is not None else ""), flush=True)
        (out / f"leaderboard_seed{seed}.txt").write_text(ev.leaderboard_table(ens) + "\n")
    print(ev.metrics_table(reports))
    acc = np.array([r["full"]["accuracy"] for r in summary])
    print(f"accuracy mean {acc.mean():.4f} std {acc.std():.4f}")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=float) + "\n")


if __name__ == "__main__":
    main()
