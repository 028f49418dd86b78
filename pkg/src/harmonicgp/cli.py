"""Command-line harness around the models, decompositions, and benchmarks.

    hgp <fit|predict|decompose|diagnose|bench> --config cfg.json
        [--threads k] [--out dir]

One JSON file configures a run; every verb is deterministic under a
fixed seed and thread count 1.  All numeric CSV output uses 17
significant digits so artifacts round-trip exactly.  Config problems are
reported with the offending field path and exit status 2; any other
failure exits 1.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import data as data_mod
from . import diagnostics
from . import gp
from . import hkd
from . import kernels as kernels_mod
from . import training
from . import transforms as transforms_mod
from .errors import ConfigError
from .seeding import seed_stream

_MISSING = object()
_FMT = "%.17g"


def _get(cfg, path, default=_MISSING, kind=None):
    node = cfg
    for name in path.split("."):
        if not isinstance(node, dict) or name not in node:
            if default is not _MISSING:
                return default
            raise ConfigError(path, "missing required field")
        node = node[name]
    if kind is not None and not isinstance(node, kind):
        raise ConfigError(path, f"expected {kind.__name__}, got {type(node).__name__}")
    return node


def _child_seed(seed: int, name: str) -> int:
    return int(seed_stream(seed, name).integers(2**63))


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(
                ",".join(
                    str(v) if isinstance(v, (int, str)) else _FMT % v for v in row
                )
                + "\n"
            )


# ---------------------------------------------------------------------------
# config -> objects


def build_dataset(cfg) -> data_mod.Dataset:
    source = _get(cfg, "data.source", kind=str)
    seed = _get(cfg, "seed", 0)
    if source == "csv":
        path = _get(cfg, "data.path", kind=str)
        if not os.path.exists(path):
            raise ConfigError("data.path", f"no such file: {path}")
        return data_mod.load_csv(
            path,
            _get(cfg, "data.target_column"),
            standardize=_get(cfg, "data.standardize", True),
            seed=seed,
        )
    if source == "symmetric_1d":
        return data_mod.make_symmetric_1d(_get(cfg, "data.n", 500), seed=seed)
    if source == "torus_grid":
        return data_mod.make_torus_grid(
            _get(cfg, "data.n_lon", 36), _get(cfg, "data.n_lat", 12), seed=seed
        )
    if source == "flip_images":
        return data_mod.make_flip_images(
            _get(cfg, "data.n", 2000), _get(cfg, "data.side", 8), seed=seed
        )
    raise ConfigError("data.source", f"unknown source {source!r}")


def build_kernel(cfg, dataset=None):
    desc = dict(_get(cfg, "kernel", kind=dict))
    if _get(cfg, "init.lengthscale", None) == "median" and dataset is not None:
        desc["lengthscales"] = data_mod.median_heuristic(
            dataset.X_train, seed=_get(cfg, "seed", 0)
        )
    try:
        return kernels_mod.from_descriptor(desc)
    except Exception as exc:
        raise ConfigError("kernel", str(exc)) from exc


def build_transform(cfg):
    desc = _get(cfg, "transform", None)
    if desc is None:
        return None
    try:
        return transforms_mod.from_descriptor(desc)
    except Exception as exc:
        raise ConfigError("transform", str(exc)) from exc


def build_likelihood(cfg, dataset=None):
    desc = _get(cfg, "likelihood", {"kind": "gaussian", "noise_variance": 0.1})
    try:
        lik = gp.likelihood_from_descriptor(desc)
    except Exception as exc:
        raise ConfigError("likelihood", str(exc)) from exc
    if dataset is not None and dataset.task == "binary" and lik.kind != "bernoulli":
        raise ConfigError("likelihood.kind", "binary dataset needs the bernoulli likelihood")
    return lik


def _init_inducing(cfg, dataset, m):
    if m < 1:
        raise ConfigError("model.m", "need at least one inducing point")
    scheme = _get(cfg, "init.inducing", "kmeans")
    seed = _get(cfg, "seed", 0)
    if scheme == "kmeans":
        return data_mod.kmeans_init(dataset.X_train, m, seed=_child_seed(seed, "init"))
    if scheme == "random":
        rng = seed_stream(seed, "init")
        return dataset.X_train[rng.choice(dataset.X_train.shape[0], m, replace=False)]
    raise ConfigError("init.inducing", f"unknown scheme {scheme!r}")


def build_model(cfg, dataset):
    kernel = build_kernel(cfg, dataset)
    transform = build_transform(cfg)
    lik = build_likelihood(cfg, dataset)
    m = _get(cfg, "model.m", kind=int)
    Z = _init_inducing(cfg, dataset, m)
    if transform is None:
        return gp.build_svgp(kernel, lik, Z)
    return gp.build_hvgp(kernel, transform, lik, Z, seed=_get(cfg, "seed", 0))


def build_train_config(cfg) -> training.TrainConfig:
    sched = _get(cfg, "train.lr_schedule", None)
    try:
        return training.TrainConfig(
            iterations=_get(cfg, "train.iterations", kind=int),
            batch_size=_get(cfg, "train.batch_size", kind=int),
            learning_rate=_get(cfg, "train.learning_rate", 0.01),
            seed=_get(cfg, "train.seed", _get(cfg, "seed", 0)),
            lr_schedule=tuple(sched) if sched else None,
            eval_every=_get(cfg, "train.eval_every", 50),
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError("train", str(exc)) from exc


def _test_metrics(model, dataset, threads: int) -> dict:
    mean, var = gp.predict(model, dataset.X_test, threads=threads)
    lik = model.current_likelihood()
    if dataset.task == "binary":
        proba = lik.predict_proba(mean, var)
        acc = float(np.mean((proba > 0.5) == (dataset.y_test > 0.5)))
        nll = -float(np.mean(lik.log_pred_density(dataset.y_test, mean, var)))
        return {"accuracy": acc, "nll": nll}
    mean_y, var_y = lik.predict_y(mean, var)
    out = data_mod.metrics(mean_y, var_y, dataset.y_test, (dataset.y_mean, dataset.y_std))
    return out


# ---------------------------------------------------------------------------
# verbs


def run_fit(cfg, out, threads):
    dataset = build_dataset(cfg)
    model = build_model(cfg, dataset)
    t0 = time.perf_counter()
    model, trace = training.fit(model, dataset, build_train_config(cfg))
    wall = time.perf_counter() - t0
    trace.to_csv(os.path.join(out, "trace.csv"))
    with open(os.path.join(out, "checkpoint.json"), "w") as fh:
        json.dump(gp.to_checkpoint(model), fh)
    report = _test_metrics(model, dataset, threads)
    report["final_elbo"] = gp.elbo(model, dataset.X_train, dataset.y_train)
    report["wall_seconds"] = wall
    with open(os.path.join(out, "metrics.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    return 0


def run_predict(cfg, out, threads):
    ckpt_path = _get(cfg, "predict.checkpoint", os.path.join(out, "checkpoint.json"))
    if not os.path.exists(ckpt_path):
        raise ConfigError("predict.checkpoint", f"no such file: {ckpt_path}")
    with open(ckpt_path) as fh:
        model = gp.model_from_checkpoint(json.load(fh))
    dataset = build_dataset(cfg)
    breakdown = _get(cfg, "predict.breakdown", False)
    lik = model.current_likelihood()

    header = ["row"]
    detail = None
    if breakdown and model.model_type == "hvgp":
        mean, var, detail = gp.predict(
            model, dataset.X_test, breakdown=True, threads=threads
        )
    else:
        mean, var = gp.predict(model, dataset.X_test, threads=threads)

    if dataset.task == "binary":
        header += ["probability"]
        cols = [lik.predict_proba(mean, var)]
    else:
        mean_y, var_y = lik.predict_y(mean, var)
        header += ["mean", "var"]
        cols = [
            dataset.unstandardize_y(mean_y),
            var_y * dataset.y_std**2,
        ]
    if detail is not None:
        for t, mean_t, var_t in zip(detail["part_index"], detail["mean"], detail["var"]):
            tag = "_".join(str(i) for i in (t if isinstance(t, tuple) else (t,)))
            header += [f"part{tag}_mean", f"part{tag}_var"]
            cols += [mean_t * dataset.y_std, var_t * dataset.y_std**2]
    rows = [
        [int(dataset.idx_test[i])] + [c[i] for c in cols] for i in range(mean.shape[0])
    ]
    _write_csv(os.path.join(out, "predictions.csv"), header, rows)
    return 0


def _probe_rows(cfg, transform, kernel, count):
    """Pairs of probe inputs: dataset rows when configured, else seeded draws."""
    if _get(cfg, "data", None) is not None:
        X = build_dataset(cfg).X
        rng = seed_stream(_get(cfg, "seed", 0), "probes")
        idx = rng.choice(X.shape[0], size=min(2 * count, X.shape[0]), replace=False)
        half = idx.size // 2
        return X[idx[:half]], X[idx[half : 2 * half]]
    rng = seed_stream(_get(cfg, "seed", 0), "probes")
    if kernel.input_map == "sphere":
        draw = lambda: np.column_stack(
            [rng.uniform(0.0, 360.0, count), rng.uniform(-90.0, 90.0, count)]
        )
        return draw(), draw()
    return transform.probes(rng, count), transform.probes(rng, count)


def run_decompose(cfg, out, threads):
    kernel = build_kernel(cfg)
    transform = build_transform(cfg)
    if transform is None:
        raise ConfigError("transform", "decompose needs a transform")
    parts = hkd.real_decomposition(kernel, transform)
    X1, X2 = _probe_rows(cfg, transform, kernel, _get(cfg, "decompose.pairs", 200))
    vals = [np.real(p.pair_vals(X1, X2)) for p in parts]
    base = np.real(kernels_mod.pair_vals(kernel, X1, X2))
    residual = float(np.max(np.abs(sum(vals) - base)))

    rows = []
    for pi, (part, v) in enumerate(zip(parts, vals)):
        tag = "/".join(str(i) for i in (part.index if isinstance(part.index, tuple) else (part.index,)))
        for j in range(v.size):
            rows.append([j, tag, v[j]])
    _write_csv(os.path.join(out, "parts.csv"), ["pair", "part", "value"], rows)
    report = {
        "num_parts": len(parts),
        "decomposition_residual": residual,
        "part_max_abs": [float(np.max(np.abs(v))) for v in vals],
    }
    with open(os.path.join(out, "residuals.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    return 0


def run_diagnose(cfg, out, threads):
    kernel = build_kernel(cfg)
    transform = build_transform(cfg)
    if transform is None:
        raise ConfigError("transform", "diagnose needs a transform")
    X1, X2 = _probe_rows(cfg, transform, kernel, _get(cfg, "diagnose.probes", 50))
    report = diagnostics.orthogonality_suite(kernel, transform, X1)
    report.update(diagnostics.inter_domain_check(kernel, transform, X1[:6], X2))
    residual_keys = [
        "decomposition_residual", "shift_residual", "orbit_covariance_residual",
        "quadratic_form_residual", "cross_frequency_residual",
        "point_residual", "gram_residual", "cross_residual",
    ]
    report["tolerances_ok"] = bool(
        all(report[k] <= 1e-10 for k in residual_keys)
        and report["min_part_eigenvalue"] >= -1e-8
    )
    with open(os.path.join(out, "diagnostics.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    return 0


def run_bench(cfg, out, threads):
    transform = build_transform(cfg)
    if transform is None:
        raise ConfigError("transform", "bench needs a transform")
    kernel = build_kernel(cfg)
    seed = _get(cfg, "seed", 0)
    batch = _get(cfg, "bench.batch_size", 1024)
    repeats = _get(cfg, "bench.repeats", 3)
    d = _get(cfg, "bench.d", kind=int)
    rng = seed_stream(seed, "bench")
    X = rng.standard_normal((batch, d))
    y = rng.standard_normal(batch)
    lik = gp.GaussianLikelihood(0.1)

    def step_time(model):
        gp.elbo_grad(model, X, y, data_size=batch)  # warm up
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            gp.elbo_grad(model, X, y, data_size=batch)
            times.append(time.perf_counter() - t0)
        return float(np.median(times)) * 1e3

    rows = []
    for m in _get(cfg, "bench.m_per_part", [128]):
        hv = gp.build_hvgp(kernel, transform, lik, rng.standard_normal((m, d)), seed=seed)
        T_r = hv.num_parts
        M = T_r * m
        sv = gp.build_svgp(kernel, lik, rng.standard_normal((M, d)))
        rows.append(["hvgp", T_r, m, M, batch, step_time(hv), T_r * m**3 / 3.0])
        rows.append(["svgp", 1, M, M, batch, step_time(sv), M**3 / 3.0])
    _write_csv(
        os.path.join(out, "bench.csv"),
        ["model", "parts", "m_per_part", "total_inducing", "batch", "wall_ms", "chol_flops"],
        rows,
    )
    return 0


VERBS = {
    "fit": run_fit,
    "predict": run_predict,
    "decompose": run_decompose,
    "diagnose": run_diagnose,
    "bench": run_bench,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hgp", description="decomposed variational GP experiment harness"
    )
    parser.add_argument("verb", choices=sorted(VERBS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--threads", type=int, default=1, help="per-part parallelism")
    parser.add_argument("--out", default=None, help="artifact directory")
    args = parser.parse_args(argv)

    try:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except FileNotFoundError:
            raise ConfigError("--config", f"no such file: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON: {exc}") from None
        if args.threads < 1:
            raise ConfigError("--threads", "must be >= 1")
        out = args.out or _get(cfg, "output_dir", "out")
        os.makedirs(out, exist_ok=True)
        return VERBS[args.verb](cfg, out, args.threads)
    except ConfigError as exc:
        print(f"config error at {exc.path}: {exc.message}", file=sys.stderr)
        return 2
    except Exception as exc:  # nonzero exit on any failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
