"""Experiment harness: reproducible pipelines from data generation to reports.

Subcommands: gen-data, train, bounds, geometry, geps, ssl, report. Every command
reads one JSON config (plus flag overrides), writes into the config's output
directory, and stamps the config hash into each file it produces. Exit codes:
1 usage, 2 config, 3 data (missing/mismatched files), 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .bounds import (BoundInputs, BoundReport, eta_prime_theoretical,
                     generalization_bound, improvement_factor,
                     mu_bound_symmetric, mu_bound_worst, r_to_se_bound)
from .config import ConfigError, ExperimentConfig, load_config
from .data import (Dataset, IdxFormatError, IdxImages, SplitSpec, binarize,
                   gen_clustered, load_idx_pair, split, write_idx_images,
                   write_idx_labels)
from .geometry import (ClusteredSample, empirical_cluster_margin,
                       encoded_cluster_margin, lipschitz_empirical,
                       lipschitz_upper)
from .linalg import frobenius_norm, spectral_norm
from .losses import empirical_margin_loss, g_epsilon, mu_hat, recon_metrics
from .network import (autoencoder_arch, encode, load_checkpoint, save_checkpoint,
                      train)
from .semisup import ssl_compare

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class DataFileError(Exception):
    """Missing or inconsistent data/checkpoint files."""


# column contracts, mirrored in docs/schema.md; report validates against these
CSV_SCHEMAS = {
    "bounds.csv": ["sample_frac", "m", "margin_loss_hat_g2", "test_margin_loss_g1",
                   "complexity", "delta_term", "delta_term_normalized", "mu_hat",
                   "mu_bound_worst", "mu_bound_symmetric", "se_mean"],
    "geometry.csv": ["sample_frac", "eta", "eta_prime_empirical",
                     "eta_prime_theoretical", "eta_prime_vacuous",
                     "lipschitz_upper", "lipschitz_empirical", "improvement_factor"],
    "geps.csv": ["eps_over_mu", "fraction_in"],
    "ssl.csv": ["seed", "m", "n", "cutoff", "ssl_error", "supervised_error",
                "n_clusters_found"],
}


def _frac_tag(frac: float) -> str:
    return f"{frac:.2f}"


def _out(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path: Path, header: list[str], rows: list[list], config_hash: str):
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path: Path) -> tuple[list[str], list[dict]]:
    """Read a report CSV, skipping the config-hash comment line."""
    if not path.exists():
        raise DataFileError(f"missing file: {path}")
    with open(path, "r", newline="", encoding="ascii") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None:
        raise DataFileError(f"{path} has no header")
    return list(reader.fieldnames), list(reader)


def _write_json(path: Path, obj: dict):
    with open(path, "w", encoding="ascii") as fh:
        json.dump(obj, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _load_dataset(cfg: ExperimentConfig) -> Dataset:
    ds = cfg.dataset
    out = _out(cfg)
    if ds["kind"] == "synthetic":
        images_path = out / "images.idx"
        labels_path = out / "labels.idx"
        if not images_path.exists() or not labels_path.exists():
            raise DataFileError(
                f"dataset files not found under {out}; run gen-data first")
        images, labels = load_idx_pair(images_path, labels_path)
        return binarize(images, threshold=0.5, labels=labels)
    images_path, labels_path = Path(ds["images"]), Path(ds["labels"])
    for p in (images_path, labels_path):
        if not p.exists():
            raise DataFileError(f"missing file: {p}")
    images, labels = load_idx_pair(images_path, labels_path)
    if ds["limit"]:
        limit = int(ds["limit"])
        images = IdxImages(images.data[:limit], images.rows, images.cols)
        labels = labels[:limit]
    return binarize(images, threshold=float(ds["threshold"]), labels=labels)


def _splits(cfg: ExperimentConfig, data: Dataset):
    n_labeled, m_unlabeled, n_test = cfg.split_sizes
    return split(data, SplitSpec(n_labeled, m_unlabeled, n_test, seed=cfg.seed))


def _train_subset(cfg: ExperimentConfig, data: Dataset, frac: float) -> Dataset:
    pool = _splits(cfg, data).unlabeled
    m = max(1, math.ceil(frac * len(pool)))
    return pool.subset(np.arange(m))


def _checkpoint_path(cfg: ExperimentConfig, frac: float) -> Path:
    return _out(cfg) / f"model_f{_frac_tag(frac)}.json"


def _load_model(cfg: ExperimentConfig, frac: float, data: Dataset):
    path = _checkpoint_path(cfg, frac)
    if not path.exists():
        raise DataFileError(f"missing checkpoint {path}; run train first")
    params = load_checkpoint(path)
    if params.input_dim != data.M:
        raise DataFileError(
            f"checkpoint {path} expects dim {params.input_dim}, dataset has {data.M}")
    return params


def cmd_gen_data(cfg: ExperimentConfig, args) -> int:
    out = _out(cfg)
    ds = cfg.dataset
    meta = {"config_hash": cfg.hash(), "kind": ds["kind"]}
    if ds["kind"] == "synthetic":
        gen = gen_clustered(int(ds["clusters"]), int(ds["dim"]), int(ds["flips"]),
                            int(ds["per_cluster"]), seed=cfg.seed)
        data = gen.dataset
        (out / "images.idx").write_bytes(
            write_idx_images(IdxImages(data.samples * 255, data.M, 1)))
        (out / "labels.idx").write_bytes(write_idx_labels(data.labels))
        meta.update(
            n_samples=len(data), dim=data.M, clusters=int(ds["clusters"]),
            flips=int(ds["flips"]), guaranteed_margin=gen.guaranteed_margin,
            hamming_floor=gen.hamming_floor)
    else:
        data = _load_dataset(cfg)
        meta.update(n_samples=len(data), dim=data.M)
    _write_json(out / "dataset_meta.json", meta)
    print(f"wrote {meta['n_samples']} samples of dim {meta['dim']} to {out}")
    return EXIT_OK


def cmd_train(cfg: ExperimentConfig, args) -> int:
    data = _load_dataset(cfg)
    arch = autoencoder_arch(cfg.arch_dims,
                            cfg.raw["arch"]["hidden_activation"],
                            cfg.raw["arch"]["output_activation"])
    if cfg.arch_dims[0] != data.M:
        raise DataFileError(
            f"arch expects dim {cfg.arch_dims[0]}, dataset has {data.M}")
    train_cfg = cfg.train_config()
    for frac in _fractions(cfg, args):
        subset = _train_subset(cfg, data, frac)
        params, history = train(arch, subset.floats(), train_cfg,
                                bottleneck_index=cfg.bottleneck_index,
                                use_bias=bool(cfg.raw["arch"]["use_bias"]))
        save_checkpoint(params, _checkpoint_path(cfg, frac), config_hash=cfg.hash())
        _write_csv(_out(cfg) / f"history_f{_frac_tag(frac)}.csv",
                   ["epoch", "surrogate_loss"],
                   [[e, repr(v)] for e, v in enumerate(history)], cfg.hash())
        print(f"frac {_frac_tag(frac)}: trained on {len(subset)} samples, "
              f"loss {history[0]:.4f} -> {history[-1]:.4f}")
    return EXIT_OK


def _fractions(cfg: ExperimentConfig, args) -> list[float]:
    if getattr(args, "fraction", None) is not None:
        return [float(args.fraction)]
    return cfg.sample_fractions


def _report_path(cfg: ExperimentConfig, frac: float) -> Path:
    return _out(cfg) / f"report_f{_frac_tag(frac)}.json"


def cmd_bounds(cfg: ExperimentConfig, args) -> int:
    data = _load_dataset(cfg)
    splits = _splits(cfg, data)
    margins = cfg.margins
    rows = []
    for frac in _fractions(cfg, args):
        params = _load_model(cfg, frac, data)
        subset = _train_subset(cfg, data, frac)
        inputs = BoundInputs(B=max(subset.B, 1e-12), m=len(subset), delta=cfg.delta,
                             margins=margins, d=params.depth, h=params.max_width,
                             M=data.M)
        norms = _spectral_norms(params)
        loss_g2 = empirical_margin_loss(params, subset, margins.gamma2)
        gen_bound = generalization_bound(params, inputs, loss_g2, norms=norms)
        test_metrics = recon_metrics(params, splits.test, margins.gamma1)
        test_loss_g1 = test_metrics.margin_loss_hat
        mu_test = test_metrics.mu_hat
        r_worst = r_to_se_bound(test_loss_g1, margins.gamma1, data.M)
        report = BoundReport(
            spectral_norms=norms,
            frobenius_norms=[frobenius_norm(w) for w in params.weights],
            complexity=gen_bound.complexity,
            delta_term=gen_bound.delta_term,
            delta_term_normalized=gen_bound.delta_term_normalized,
            margin_loss_hat_g2=loss_g2,
            margin_bound_g1=gen_bound.margin_bound_g1,
            R_worst=r_worst,
            mu_bound_worst=mu_bound_worst(test_loss_g1, margins.gamma1, data.M),
            mu_bound_symmetric=mu_bound_symmetric(test_loss_g1, margins.gamma1, data.M),
            mu_hat=mu_test,
            sample_frac=frac,
            m=len(subset),
            test_margin_loss_g1=test_loss_g1,
            se_mean=test_metrics.se_loss_mean,
            outside_theorem_assumptions=params.biases is not None,
        )
        payload = {"config_hash": cfg.hash()}
        payload.update(report.to_dict())
        _write_json(_report_path(cfg, frac), payload)
        rows.append([_frac_tag(frac), len(subset), repr(loss_g2), repr(test_loss_g1),
                     repr(gen_bound.complexity), repr(gen_bound.delta_term),
                     repr(gen_bound.delta_term_normalized), repr(mu_test),
                     repr(report.mu_bound_worst), repr(report.mu_bound_symmetric),
                     repr(test_metrics.se_loss_mean)])
        print(f"frac {_frac_tag(frac)}: bound {gen_bound.margin_bound_g1:.3f} "
              f"(test loss {test_loss_g1:.3f})")
    _write_csv(_out(cfg) / "bounds.csv", CSV_SCHEMAS["bounds.csv"], rows, cfg.hash())
    return EXIT_OK


def _spectral_norms(params) -> list[float]:
    return [spectral_norm(w) for w in params.weights]


def cmd_geometry(cfg: ExperimentConfig, args) -> int:
    data = _load_dataset(cfg)
    splits = _splits(cfg, data)
    if splits.test.labels is None:
        raise DataFileError("geometry needs labeled test data")
    margins = cfg.margins
    rows = []
    for frac in _fractions(cfg, args):
        params = _load_model(cfg, frac, data)
        report_path = _report_path(cfg, frac)
        if not report_path.exists():
            raise DataFileError(f"missing {report_path}; run bounds first")
        with open(report_path, "r", encoding="ascii") as fh:
            payload = json.load(fh)

        test_pts = splits.test.floats()
        mu_test = mu_hat(params, splits.test)
        eps = mu_test  # audit point of the coverage curve: eps/mu = 1
        mask, _ = g_epsilon(params, splits.test, eps, mu_ref=mu_test)
        sample = ClusteredSample(test_pts, splits.test.labels, in_geps=mask)
        eta = empirical_cluster_margin(sample).eta_hat
        eta_prime_emp = encoded_cluster_margin(params, sample, restrict_geps=True).eta_hat
        c_upper = lipschitz_upper(params)
        codes = encode(params, test_pts)
        c_emp = lipschitz_empirical(params, codes, seed=cfg.seed)
        eta_prime_theory = eta_prime_theoretical(eta, mu_test, eps, c_upper)
        n_b = params.bottleneck_dim
        improvement = improvement_factor(int(payload["m"]), data.M, n_b)

        payload.update(
            eta=eta, eta_prime_empirical=eta_prime_emp,
            eta_prime_theoretical=eta_prime_theory,
            eta_prime_vacuous=eta_prime_theory <= 0.0,
            lipschitz_upper=c_upper, lipschitz_empirical=c_emp,
            improvement_factor=improvement, n_to_nb=f"{data.M}->{n_b}")
        _write_json(report_path, payload)
        rows.append([_frac_tag(frac), repr(eta), repr(eta_prime_emp),
                     repr(eta_prime_theory), int(eta_prime_theory <= 0.0),
                     repr(c_upper), repr(c_emp), repr(improvement)])
        print(f"frac {_frac_tag(frac)}: eta {eta:.3f}, encoded {eta_prime_emp:.3f}, "
              f"C_upper {c_upper:.3f}")
    _write_csv(_out(cfg) / "geometry.csv", CSV_SCHEMAS["geometry.csv"], rows, cfg.hash())
    return EXIT_OK


def cmd_geps(cfg: ExperimentConfig, args) -> int:
    data = _load_dataset(cfg)
    splits = _splits(cfg, data)
    frac = float(args.fraction) if args.fraction is not None else cfg.sample_fractions[-1]
    params = _load_model(cfg, frac, data)
    if getattr(args, "mu_ref", "empirical") == "bound":
        report_path = _report_path(cfg, frac)
        if not report_path.exists():
            raise DataFileError(f"--mu-ref bound needs {report_path}; run bounds first")
        with open(report_path, "r", encoding="ascii") as fh:
            mu_ref = float(json.load(fh)["mu_bound_worst"])
    else:
        mu_ref = mu_hat(params, splits.test)
    if mu_ref == 0.0:
        raise FloatingPointError("reference reconstruction error is exactly zero; "
                                 "the eps/mu coverage curve is undefined")
    rows = []
    for ratio in cfg.epsilon_grid:
        _, fraction_in = g_epsilon(params, splits.test, ratio * mu_ref, mu_ref=mu_ref)
        rows.append([repr(float(ratio)), repr(fraction_in)])
    _write_csv(_out(cfg) / "geps.csv", CSV_SCHEMAS["geps.csv"], rows, cfg.hash())
    print(f"coverage at eps=mu: {dict(rows).get(repr(1.0), 'n/a')}")
    return EXIT_OK


def cmd_ssl(cfg: ExperimentConfig, args) -> int:
    data = _load_dataset(cfg)
    frac = float(args.fraction) if args.fraction is not None else cfg.sample_fractions[-1]
    params = _load_model(cfg, frac, data)
    n_labeled, m_unlabeled, n_test = cfg.split_sizes
    result = ssl_compare(params, data, n_labeled, m_unlabeled, n_test, cfg.ssl_config())
    rows = [[r.seed, r.m, r.n, repr(r.cutoff), repr(r.ssl_error),
             repr(r.supervised_error), r.n_clusters_found] for r in result.runs]
    _write_csv(_out(cfg) / "ssl.csv", CSV_SCHEMAS["ssl.csv"], rows, cfg.hash())
    print(f"ssl error {result.mean_ssl_error:.4f} vs supervised "
          f"{result.mean_supervised_error:.4f} over {len(result.runs)} seeds")
    return EXIT_OK


def cmd_report(cfg: ExperimentConfig, args) -> int:
    out = _out(cfg)
    summary: dict = {"config_hash": cfg.hash()}
    for name, expected in CSV_SCHEMAS.items():
        path = out / name
        if name in ("geometry.csv",) and not path.exists():
            continue  # geometry pass is optional for a minimal report
        header, rows = read_csv(path)
        missing = [c for c in expected if c not in header]
        if missing:
            raise DataFileError(f"{name} is missing expected columns: {missing}")
        summary[name.removesuffix(".csv")] = rows
    reports = []
    for frac in cfg.sample_fractions:
        path = _report_path(cfg, frac)
        if path.exists():
            with open(path, "r", encoding="ascii") as fh:
                reports.append(json.load(fh))
    summary["reports"] = reports
    if reports and reports[-1].get("eta") is not None:
        last = reports[-1]
        summary["table"] = {
            "n_to_nb": last["n_to_nb"],
            "eta": last["eta"],
            "eta_prime": last["eta_prime_empirical"],
            "c_upper": last["lipschitz_upper"],
            "c_empirical": last["lipschitz_empirical"],
            "improvement_factor": last["improvement_factor"],
        }
    if (out / "ssl.csv").exists():
        _, ssl_rows = read_csv(out / "ssl.csv")
        ssl_err = [float(r["ssl_error"]) for r in ssl_rows]
        sup_err = [float(r["supervised_error"]) for r in ssl_rows]
        summary["ssl_aggregate"] = {
            "mean_ssl_error": float(np.mean(ssl_err)),
            "std_ssl_error": float(np.std(ssl_err)),
            "mean_supervised_error": float(np.mean(sup_err)),
            "std_supervised_error": float(np.std(sup_err)),
            "n_seeds": len(ssl_rows),
        }
    _write_json(out / "summary.json", summary)
    print(f"wrote {out / 'summary.json'}")
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "bounds": cmd_bounds,
    "geometry": cmd_geometry,
    "geps": cmd_geps,
    "ssl": cmd_ssl,
    "report": cmd_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aebound", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--output-dir", default=None, help="override output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="cap worker threads (computation is deterministic either way)")
        if name in ("geps", "ssl", "train", "bounds", "geometry"):
            p.add_argument("--fraction", type=float, default=None,
                           help="restrict to one training fraction")
        if name == "geps":
            p.add_argument("--mu-ref", choices=["empirical", "bound"],
                           default="empirical",
                           help="deviation reference: measured mean error or its "
                                "worst-case bound from the bounds pass")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "output_dir": args.output_dir,
                 "threads": args.threads}
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFileError, IdxFormatError, FileNotFoundError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, ZeroDivisionError, OverflowError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
