"""Command-line experiment driver.

    nextcell generate --config exp.json --out out
    nextcell offline  --config exp.json --out out
    nextcell baseline --config exp.json --out out
    nextcell online   --config exp.json --out out
    nextcell inspect-model out/offline/banks/bank_r0.6.json

Exit status is 0 on success, 1 for invalid input or configuration and 2 for
runtime failures such as solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, plots
from .config import ConfigError, ExperimentConfig
from .dataset import generate_dataset, generate_histories, load_dataset, save_dataset, split_dataset
from .experiments import baseline_sweep, offline_sweep
from .online import OnlineConfig, accuracy_series, run_online, write_series_csv
from .predictor import AccuracyReport, BankConfig, BankFileError, load_bank, save_bank
from .svm import ConvergenceError

log = logging.getLogger("nextcell")

HISTORY_FILE = "histories.csv"


def _parse_grid(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ratio grid {text!r}") from None


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    d = cfg.to_dict()
    if getattr(args, "seed", None) is not None:
        d["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        d["out"] = args.out
    if getattr(args, "ratio_grid", None) is not None:
        d["ratio_grid"] = args.ratio_grid
    if getattr(args, "samples_per_path", None) is not None:
        d["samples_per_path"] = args.samples_per_path
    base = str(Path(args.config).parent) if args.config else "."
    return ExperimentConfig.from_dict(d, base_dir=base)


def write_manifest(directory: Path, command: str, cfg: ExperimentConfig, outputs) -> None:
    manifest = {
        "command": command,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "versions": {"nextcell": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "config": cfg.to_dict(),
        "outputs": sorted(str(o) for o in outputs),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def bank_config(cfg: ExperimentConfig) -> BankConfig:
    bc = BankConfig(length=cfg.length, folds=cfg.folds, cv_subset=cfg.cv_subset,
                    C=cfg.C, gamma=cfg.gamma, seed=cfg.seed)
    if cfg.C_grid is not None:
        bc.C_grid = cfg.C_grid
    if cfg.gamma_grid is not None:
        bc.gamma_grid = cfg.gamma_grid
    return bc


def save_histories(file, H, y, neighbor_ids) -> None:
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"h{k + 1}" for k in range(H.shape[1])] + ["next"])
        for h, lab in zip(H, y):
            w.writerow([neighbor_ids[i] for i in h] + [int(lab)])


def load_histories(file, neighbor_ids) -> tuple[np.ndarray, np.ndarray]:
    index = {c: k for k, c in enumerate(neighbor_ids)}
    with open(file, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    H = np.array([[index[int(c)] for c in r[:-1]] for r in rows], dtype=int)
    y = np.array([int(r[-1]) for r in rows], dtype=int)
    return H, y


def cmd_generate(cfg: ExperimentConfig) -> Path:
    topo, rmap = cfg.scenario.build()
    rng = np.random.default_rng(cfg.seed)
    data = generate_dataset(topo, cfg.samples_per_path, cfg.scenario.channel, rng, rmap)
    out = Path(cfg.out) / "dataset"
    save_dataset(data, out)
    n_hist = cfg.baseline_samples or len(data)
    H, y = generate_histories(topo, n_hist, rng, cfg.history_length)
    save_histories(out / HISTORY_FILE, H, y, topo.neighbor_ids)
    write_manifest(out, "generate", cfg, ["traversals.csv", "gains.npy", HISTORY_FILE])
    log.info("wrote %d traversals and %d histories to %s", len(data), n_hist, out)
    return out


def _dataset_dir(cfg: ExperimentConfig, data_dir) -> Path:
    d = Path(data_dir) if data_dir else Path(cfg.out) / "dataset"
    if not (d / "traversals.csv").exists():
        raise FileNotFoundError(f"no dataset at {d}; run 'nextcell generate' first")
    return d


def cmd_offline(cfg: ExperimentConfig, data_dir=None) -> Path:
    data = load_dataset(_dataset_dir(cfg, data_dir))
    topo, _ = cfg.scenario.build()
    train, test = split_dataset(data, cfg.split[1], np.random.default_rng(cfg.seed))
    report, banks = offline_sweep(train, test, cfg.ratio_grid, bank_config(cfg), topo.cell_id,
                                  cfg.seed)
    out = Path(cfg.out) / "offline"
    (out / "banks").mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "accuracy.csv")
    outputs = ["accuracy.csv", "accuracy_vs_ratio.png"]
    for ratio, bank in banks.items():
        name = f"banks/bank_r{ratio:g}.json"
        save_bank(bank, out / name)
        outputs.append(name)
    base_csv = Path(cfg.out) / "baseline" / "baseline.csv"
    baseline = AccuracyReport.from_csv(base_csv) if base_csv.exists() else None
    plots.accuracy_vs_ratio(report, out / "accuracy_vs_ratio.png", baseline)
    write_manifest(out, "offline", cfg, outputs)
    for r in report.ratios:
        log.info("ratio %.2f  overall %.4f", r, report.overall(r))
    return out


def cmd_baseline(cfg: ExperimentConfig, data_dir=None, ratio_grid=None) -> Path:
    """History baseline at k_used = 2..history_length, or at ``ratio_grid`` if given."""
    d = _dataset_dir(cfg, data_dir)
    topo, _ = cfg.scenario.build()
    H, y = load_histories(d / HISTORY_FILE, topo.neighbor_ids)
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(len(y))
    n_test = int(round(cfg.split[1] * len(y)))
    te, tr = perm[:n_test], perm[n_test:]
    k_values = None
    if ratio_grid is not None:
        k_values = sorted({int(round(r * cfg.history_length)) for r in ratio_grid})
    report = baseline_sweep(H[tr], y[tr], H[te], y[te], len(topo.neighbor_ids),
                            cfg.history_length, k_values, cfg.baseline_C, cfg.baseline_gamma)
    out = Path(cfg.out) / "baseline"
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "baseline.csv")
    plots.accuracy_vs_ratio(report, out / "baseline_vs_ratio.png", title="handover history")
    write_manifest(out, "baseline", cfg, ["baseline.csv", "baseline_vs_ratio.png"])
    return out


def online_config(cfg: ExperimentConfig, seed: int) -> OnlineConfig:
    opts = dict(cfg.online)
    opts["seed"] = seed
    if opts.get("retrain_every") in ("inf", "never"):
        opts["retrain_every"] = float("inf")
    return OnlineConfig(**opts)


def cmd_online(cfg: ExperimentConfig, seeds=None) -> Path:
    topo, rmap = cfg.scenario.build()
    out = Path(cfg.out) / "online"
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for seed in seeds if seeds is not None else (cfg.seed,):
        ocfg = online_config(cfg, seed)
        olog = run_online(topo, cfg.scenario.channel, ocfg, rmap)
        series = accuracy_series(olog, ocfg.window)
        sub = out / f"seed_{seed}"
        sub.mkdir(exist_ok=True)
        olog.to_csv(sub / "online_log.csv")
        write_series_csv(series, sub / "online_accuracy.csv")
        plots.accuracy_vs_time(series, sub / "accuracy_vs_time.png")
        outputs += [f"seed_{seed}/{n}" for n in
                    ("online_log.csv", "online_accuracy.csv", "accuracy_vs_time.png")]
        log.info("seed %d: %d predictions, %d retrains", seed, len(olog.records),
                 len(olog.retrains))
    write_manifest(out, "online", cfg, outputs)
    return out


def cmd_inspect(path) -> str:
    bank = load_bank(path)
    lines = [f"bank for cell {bank.cell_id}: L={bank.length}, ratio={bank.ratio:g}, "
             f"{len(bank)} classifier(s)"]
    for prev, e in sorted(bank.classifiers.items()):
        m = e.model
        if m.constant:
            lines.append(f"  previous cell {prev}: constant -> {m.classes[0]}")
            continue
        n_sv = sum(len(b.dual_coef) for b in m.models.values())
        lines.append(f"  previous cell {prev}: classes {list(m.classes)}, "
                     f"{len(m.models)} pairwise models, {n_sv} support vectors, "
                     f"C={e.meta.get('C')}, gamma={e.meta.get('gamma')}, "
                     f"n={e.meta.get('n_samples')}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nextcell", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment JSON file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--ratio-grid", type=_parse_grid, help="comma-separated ratios")
        p.add_argument("--samples-per-path", type=int)
        return p

    common(sub.add_parser("generate", help="simulate a labeled traversal dataset"))
    p = common(sub.add_parser("offline", help="accuracy versus sample length ratio"))
    p.add_argument("--data", help="dataset directory (default OUT/dataset)")
    p = common(sub.add_parser("baseline", help="handover-history baseline sweep"))
    p.add_argument("--data", help="dataset directory (default OUT/dataset)")
    p = common(sub.add_parser("online", help="real-time prediction with feedback"))
    p.add_argument("--seeds", type=lambda s: [int(v) for v in s.split(",")],
                   help="comma-separated seeds (overrides --seed)")
    p = sub.add_parser("inspect-model", help="summarize a saved classifier bank")
    p.add_argument("bank")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "inspect-model":
            print(cmd_inspect(args.bank))
            return 0
        cfg = load_config(args)
        if args.command == "generate":
            print(cmd_generate(cfg))
        elif args.command == "offline":
            print(cmd_offline(cfg, args.data))
        elif args.command == "baseline":
            print(cmd_baseline(cfg, args.data, args.ratio_grid))
        elif args.command == "online":
            print(cmd_online(cfg, args.seeds))
    except (ConfigError, BankFileError, FileNotFoundError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConvergenceError, RuntimeError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
