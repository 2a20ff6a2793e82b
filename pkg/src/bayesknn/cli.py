"""Command-line interface: ``bknn {posterior,predict,benchmark,grid,outliers}``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import spearmanr

from . import __version__, engine
from .data import (
    CCPP_SCHEMA,
    RIPLEY_SCHEMA,
    DataError,
    Dataset,
    Schema,
    default_regression_prior,
    file_checksum,
    load_csv,
    ripley_paths,
    split,
    standardize,
)
from .estimator import (
    CLASS_ALPHA_GRID, NOISE_SCALE_GRID, P_GAMMA_GRID, BayesianKNN, class_prior, scaled_noise, tune,
)
from .model import ConfigurationError, Family, ModelParams, normal_known_variance
from .verify import knn_baseline, knn_loo_select, metrics

TOY_SCHEMA = Schema(response="label", kind="class", features=("x", "y"))


class UsageError(Exception):
    pass


# -- argument types -------------------------------------------------------------


def open_unit(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"{text} is not inside the open interval (0, 1)")
    return value


def positive(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"{text} is not positive")
    return value


def floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("data")
    g.add_argument("--dataset", choices=["ripley", "ccpp", "toy"],
                   help="bundled or well-known dataset instead of --train/--test")
    g.add_argument("--ccpp", default=os.environ.get("BKNN_CCPP"),
                   help="path to the power plant CSV (AT,V,AP,RH,PE); default $BKNN_CCPP")
    g.add_argument("--train", type=Path)
    g.add_argument("--test", type=Path)
    g.add_argument("--response", help="response column (name, or index without header)")
    g.add_argument("--features", help="comma-separated feature columns (default: all others)")
    g.add_argument("--kind", choices=["class", "real"], default="class")
    g.add_argument("--delimiter", default=",")
    g.add_argument("--no-header", action="store_true")
    g.add_argument("--test-fraction", type=open_unit, default=0.2,
                   help="held-out share when no test file is given")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--standardize", dest="standardize", action="store_true", default=None)
    g.add_argument("--no-standardize", dest="standardize", action="store_false")

    m = common.add_argument_group("model")
    m.add_argument("--family", choices=[f.value for f in Family])
    m.add_argument("--alpha", type=positive, default=1.0)
    m.add_argument("--beta", type=positive)
    m.add_argument("--dirichlet-alpha", type=floats)
    m.add_argument("--mu0", type=float)
    m.add_argument("--sigma0-sq", type=positive)
    m.add_argument("--sigma-sq", type=positive)
    m.add_argument("--p-gamma", type=open_unit, default=0.05)
    m.add_argument("--epsilon", type=open_unit,
                   help="truncate to the m nearest points with tail mass below epsilon")
    m.add_argument("--metric", choices=["euclidean", "manhattan"], default="euclidean")
    m.add_argument("--changepoint", choices=list(engine.CHANGEPOINT_CONVENTIONS), default="run",
                   help="predictive used for the change-point mass")
    m.add_argument("--map-k", action="store_true",
                   help="predict from the single most probable k instead of the full posterior")

    o = common.add_argument_group("output")
    o.add_argument("--format", choices=["csv", "json"], default="csv")
    o.add_argument("-o", "--output", default="-")
    o.add_argument("-j", "--jobs", type=int, default=os.cpu_count() or 1)

    parser = argparse.ArgumentParser(prog="bknn", description="Bayesian k-nearest neighbours")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("posterior", parents=[common], help="k-posterior for one query point")
    p.add_argument("--query", type=floats, required=True)

    sub.add_parser("predict", parents=[common], help="predictions for every test point")

    p = sub.add_parser("benchmark", parents=[common], help="Bayesian k-NN against fixed-k search")
    p.add_argument("--tune", action="store_true",
                   help="pick hyperparameters by leave-one-out log loss on the training set")
    p.add_argument("--tune-rows", type=int, default=200,
                   help="training rows used for leave-one-out tuning")
    p.add_argument("--k-max", type=int, default=100)

    p = sub.add_parser("grid", parents=[common], help="class probabilities over a 2-D grid")
    p.add_argument("--bounds", type=floats, help="xmin,xmax,ymin,ymax (default: data range)")
    p.add_argument("--resolution", type=int, default=100)

    p = sub.add_parser("outliers", parents=[common], help="max-over-k probability of test responses")
    p.add_argument("--samples", type=int, default=200)
    return parser


# -- data and model resolution --------------------------------------------------


@dataclass
class Resolved:
    train: Dataset
    test: Optional[Dataset]
    inputs: list[Path]
    split: Optional[dict] = None
    transform: Optional[dict] = None


def _schema(args) -> Schema:
    if not args.response:
        raise UsageError("--response is required with --train")
    feats = tuple(args.features.split(",")) if args.features else None
    return Schema(args.response, args.kind, feats, args.delimiter, not args.no_header)


def resolve_data(args, need_test: bool) -> Resolved:
    if args.dataset == "ripley":
        tr, te = ripley_paths()
        res = Resolved(load_csv(tr, RIPLEY_SCHEMA), load_csv(te, RIPLEY_SCHEMA), [tr, te])
    elif args.dataset == "toy":
        path = Path(str(ripley_paths()[0].parent / "toy_two_class.csv"))
        res = Resolved(load_csv(path, TOY_SCHEMA), None, [path])
    elif args.dataset == "ccpp":
        if not args.ccpp:
            raise UsageError("power plant data not found: pass --ccpp PATH or set BKNN_CCPP")
        path = Path(args.ccpp)
        tr, te = split(load_csv(path, CCPP_SCHEMA), args.test_fraction, args.seed)
        res = Resolved(tr, te, [path], {"test_fraction": args.test_fraction, "seed": args.seed})
    else:
        if args.train is None:
            raise UsageError("give --dataset or --train")
        schema = _schema(args)
        train = load_csv(args.train, schema)
        inputs = [args.train]
        if args.test is not None:
            if schema.kind == "class":
                schema = Schema(schema.response, "class", schema.features, schema.delimiter,
                                schema.header, train.classes)
            res = Resolved(train, load_csv(args.test, schema), inputs + [args.test])
        elif need_test:
            tr, te = split(train, args.test_fraction, args.seed)
            res = Resolved(tr, te, inputs, {"test_fraction": args.test_fraction, "seed": args.seed})
        else:
            res = Resolved(train, None, inputs)

    do_scale = args.standardize if args.standardize is not None else res.train.kind == "real"
    if do_scale:
        t, res.train = standardize(res.train)
        if res.test is not None:
            res.test = t.apply(res.test)
        res.transform = {"mean": t.mean.tolist(), "scale": t.scale.tolist()}
    return res


def resolve_prior(args, train: Dataset, alpha: Optional[float] = None) -> ModelParams:
    family = Family(args.family) if args.family else None
    if train.kind == "class":
        if family is Family.NORMAL_KNOWN_VARIANCE:
            raise UsageError("the normal family needs a real-valued response; this data is categorical")
        if family is Family.BETA_BERNOULLI and train.n_classes != 2:
            raise UsageError(f"beta-bernoulli needs two classes, data has {train.n_classes}")
        a = args.alpha if alpha is None else alpha
        b = args.beta if alpha is None else None
        return class_prior(max(train.n_classes, 2), a, b, args.dirichlet_alpha if alpha is None else None)
    if family is not None and family.discrete:
        raise UsageError(f"the {family.value} family needs class labels; this data is real-valued")
    base = default_regression_prior(train)
    return normal_known_variance(
        base.mean if args.mu0 is None else args.mu0,
        base.mean_variance if args.sigma0_sq is None else args.sigma0_sq,
        base.noise_variance if args.sigma_sq is None else args.sigma_sq,
    )


def make_model(args, train: Dataset, prior: ModelParams, p_gamma: Optional[float] = None) -> BayesianKNN:
    hazard = engine.ConstantHazard(args.p_gamma if p_gamma is None else p_gamma)
    return BayesianKNN.from_dataset(train, prior, hazard, metric=args.metric,
                                    epsilon=args.epsilon, changepoint=args.changepoint)


# -- ordered parallel evaluation -----------------------------------------------

_WORKER: dict = {}


def _init_worker(model, classes, map_k):
    _WORKER.update(model=model, classes=classes, map_k=map_k)


def _query_row(item) -> dict:
    index, point, truth = item
    model: BayesianKNN = _WORKER["model"]
    res = model.query(point, truth)
    chosen = res.map_prediction if _WORKER["map_k"] else res.prediction
    kp = res.k_posterior
    row = {"index": index}
    if truth is not None:
        row["truth"] = truth
    row["prediction"] = chosen.value
    row["prediction_posterior"] = res.prediction.value
    row["prediction_map_k"] = res.map_prediction.value
    if chosen.kind == "class":
        for c, label in enumerate(_WORKER["classes"]):
            row[f"p_{label}"] = float(chosen.class_probs[c])
    else:
        row["variance"] = chosen.variance
        if truth is not None:
            row["abs_error"] = abs(chosen.estimate - truth)
    row["map_k"] = kp.map_k
    row["mean_k"] = kp.mean_k
    row["entropy"] = kp.entropy
    if truth is not None:
        row["outlier_score"] = res.prediction.outlier_score
        row["outlier_k"] = res.prediction.outlier_k
    row["_seconds"] = res.seconds
    return row


def evaluate(model: BayesianKNN, classes, points, truths, jobs: int, map_k: bool = False) -> list[dict]:
    items = [(i, p, None if t is None else _plain(t)) for i, (p, t) in enumerate(zip(points, truths))]
    init = (model, classes, map_k)
    if jobs <= 1 or len(items) < 2:
        _init_worker(*init)
        return [_query_row(it) for it in items]
    chunk = max(1, len(items) // (4 * jobs))
    with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=init) as ex:
        return list(ex.map(_query_row, items, chunksize=chunk))


def _plain(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


# -- output ------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, Path):
        return str(obj)
    obj = _plain(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _csv_cell(v) -> str:
    v = _plain(v)
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(rows: list[dict], meta: dict, fmt: str) -> str:
    rows = [{k: v for k, v in r.items() if not k.startswith("_")} for r in rows]
    if fmt == "json":
        return json.dumps(_jsonable({**meta, "rows": rows}), indent=2) + "\n"
    if not rows:
        return ""
    header = list(rows[0])
    lines = [",".join(header)]
    lines += [",".join(_csv_cell(r.get(h)) for h in header) for r in rows]
    return "\n".join(lines) + "\n"


def write_atomic(text: str, output: str) -> None:
    if output == "-":
        sys.stdout.write(text)
        return
    target = Path(output)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _meta(args, data: Resolved, **extra) -> dict:
    config = {k: v for k, v in vars(args).items() if k not in ("output",)}
    return {
        "command": args.command,
        "version": __version__,
        "config": config,
        "checksums": {str(p): file_checksum(p) for p in data.inputs},
        "split": data.split,
        "standardization": data.transform,
        **extra,
    }


def _prior_info(prior: ModelParams, p_gamma: float, model: BayesianKNN) -> dict:
    return {"family": prior.family.value, "hyperparameters": list(prior.values),
            "p_gamma": p_gamma, "truncation_m": model.m, "changepoint": model.changepoint}


# -- subcommands ---------------------------------------------------------------------


def cmd_posterior(args) -> tuple[list[dict], dict]:
    data = resolve_data(args, need_test=False)
    train = data.train
    query = np.asarray(args.query, dtype=float)
    if data.transform is not None:
        query = (query - np.asarray(data.transform["mean"])) / np.asarray(data.transform["scale"])
    prior = resolve_prior(args, train)
    model = make_model(args, train, prior)
    res = model.query(query)
    kp, nb = res.k_posterior, res.neighbors
    dist = nb.distances[::-1]
    labels = train.labels(nb.nearest_first())
    rows = []
    for k, p in enumerate(kp.probs):
        rows.append({
            "k": k,
            "probability": float(p),
            "neighbor_distance": float(dist[k - 1]) if k else None,
            "neighbor_label": labels[k - 1] if k else None,
            "neighbor_row": int(nb.index[::-1][k - 1]) if k else None,
        })
    meta = _meta(args, data, model=_prior_info(prior, args.p_gamma, model),
                 summary={"map_k": kp.map_k, "mean_k": kp.mean_k, "entropy": kp.entropy,
                          "log_evidence": kp.log_evidence})
    return rows, meta


def cmd_predict(args) -> tuple[list[dict], dict]:
    data = resolve_data(args, need_test=True)
    prior = resolve_prior(args, data.train)
    model = make_model(args, data.train, prior)
    rows = evaluate(model, data.train.classes, data.test.X, list(data.test.y), args.jobs, args.map_k)
    if data.train.kind == "class":
        for r in rows:
            for key in ("truth", "prediction", "prediction_posterior", "prediction_map_k"):
                if key in r:
                    r[key] = data.train.classes[int(r[key])]
    return rows, _meta(args, data, model=_prior_info(prior, args.p_gamma, model))


def cmd_benchmark(args) -> tuple[list[dict], dict]:
    data = resolve_data(args, need_test=True)
    train, test = data.train, data.test
    tuned = None
    p_gamma = args.p_gamma
    if args.tune:
        rows = np.arange(len(train))
        if len(rows) > args.tune_rows:
            rows = np.sort(np.random.default_rng(args.seed).choice(len(train), args.tune_rows, replace=False))
        kw = dict(metric=args.metric, epsilon=args.epsilon, changepoint=args.changepoint)
        if train.kind == "class":
            result = tune(train, lambda a: resolve_prior(args, train, alpha=a), CLASS_ALPHA_GRID,
                          P_GAMMA_GRID, rows, **kw)
            prior = resolve_prior(args, train, alpha=result.prior_value)
            knob = "alpha"
        else:
            base = resolve_prior(args, train)
            grid = (None,) if args.sigma_sq is not None else NOISE_SCALE_GRID
            result = tune(train, lambda c: scaled_noise(base, c), grid, P_GAMMA_GRID, rows, **kw)
            prior = scaled_noise(base, result.prior_value)
            knob = "noise_variance_scale"
        p_gamma = result.p_gamma
        tuned = {"criterion": "leave-one-out log loss", "rows": len(rows), knob: result.prior_value,
                 "p_gamma": result.p_gamma, "score": result.score,
                 "table": [{knob: a, "p_gamma": p, "score": s} for a, p, s in result.table]}
    else:
        prior = resolve_prior(args, train)
    model = make_model(args, train, prior, p_gamma)
    preds = evaluate(model, train.classes, test.X, list(test.y), args.jobs)
    full = metrics([r["prediction_posterior"] for r in preds], test.y, train.kind)
    mapk = metrics([r["prediction_map_k"] for r in preds], test.y, train.kind)
    (name, bayes), = full.items()
    mean_ms = 1000 * float(np.mean([r["_seconds"] for r in preds]))

    k_max = min(args.k_max, len(train) - 1)
    on_test = knn_baseline(train, test, range(1, k_max + 1), args.metric)
    loo = knn_loo_select(train, range(1, k_max + 1), args.metric)
    loo_test = dict(on_test.table)[loo.best_k]
    rows = [
        {"method": "bayesian_knn", "k": None, name: bayes},
        {"method": "bayesian_knn_map_k", "k": None, name: mapk[name]},
        {"method": "knn_best_k_on_test", "k": on_test.best_k, name: on_test.best_metric},
        {"method": "knn_loo_selected_k", "k": loo.best_k, name: loo_test},
    ]
    summary = {"metric": name, "bayesian_knn": bayes, "bayesian_knn_map_k": mapk[name],
               "knn_best_k": on_test.best_k, "knn_best": on_test.best_metric,
               "knn_loo_k": loo.best_k, "knn_loo_test": loo_test,
               "mean_query_ms": mean_ms, "n_train": len(train), "n_test": len(test)}
    meta = _meta(args, data, model=_prior_info(prior, p_gamma, model), tuning=tuned, summary=summary,
                 baseline_table=[{"k": k, name: v} for k, v in on_test.table])
    return rows, meta


def cmd_grid(args) -> tuple[list[dict], dict]:
    data = resolve_data(args, need_test=False)
    train = data.train
    if train.kind != "class":
        raise UsageError("grid needs a classification dataset")
    if train.n_features != 2:
        raise UsageError(f"grid needs exactly two features, data has {train.n_features}")
    if args.resolution < 1:
        raise UsageError("--resolution must be at least 1")
    raw = load_back = None
    if data.transform is not None:
        mean, scale = np.asarray(data.transform["mean"]), np.asarray(data.transform["scale"])
        load_back = lambda z: z * scale + mean  # noqa: E731
        raw = load_back(train.X)
    else:
        raw = train.X
    if args.bounds:
        if len(args.bounds) != 4:
            raise UsageError("--bounds takes xmin,xmax,ymin,ymax")
        x0, x1, y0, y1 = args.bounds
    else:
        (x0, y0), (x1, y1) = raw.min(axis=0), raw.max(axis=0)

    def axis(lo, hi):
        return np.array([(lo + hi) / 2]) if args.resolution == 1 else np.linspace(lo, hi, args.resolution)

    gx, gy = np.meshgrid(axis(x0, x1), axis(y0, y1), indexing="ij")
    points = np.column_stack([gx.ravel(), gy.ravel()])
    query = points if data.transform is None else (points - mean) / scale
    prior = resolve_prior(args, train)
    model = make_model(args, train, prior)
    results = evaluate(model, train.classes, query, [None] * len(query), args.jobs, args.map_k)
    rows = []
    for (x, y), r in zip(points, results):
        row = {"x": float(x), "y": float(y)}
        row.update({k: v for k, v in r.items() if k.startswith("p_")})
        rows.append(row)
    return rows, _meta(args, data, model=_prior_info(prior, args.p_gamma, model),
                       bounds=[x0, x1, y0, y1], resolution=args.resolution)


def cmd_outliers(args) -> tuple[list[dict], dict]:
    data = resolve_data(args, need_test=True)
    train, test = data.train, data.test
    if train.kind != "real":
        raise UsageError("outliers needs a regression dataset")
    n = min(args.samples, len(test))
    pick = np.sort(np.random.default_rng(args.seed).choice(len(test), n, replace=False))
    prior = resolve_prior(args, train)
    model = make_model(args, train, prior)
    results = evaluate(model, (), test.X[pick], list(test.y[pick]), args.jobs, args.map_k)
    rows = [{
        "index": int(i), "truth": r["truth"], "estimate": r["prediction"], "abs_error": r["abs_error"],
        "max_prob": r["outlier_score"], "argmax_k": r["outlier_k"],
    } for i, r in zip(pick, results)]
    return rows, _meta(args, data, model=_prior_info(prior, args.p_gamma, model),
                       summary=outlier_summary(rows))


def outlier_summary(rows: list[dict]) -> dict:
    err = np.array([r["abs_error"] for r in rows])
    prob = np.array([r["max_prob"] for r in rows])
    ks = np.array([r["argmax_k"] for r in rows])
    top = np.argsort(-err, kind="stable")[: max(1, len(rows) // 10)]
    rho = spearmanr(err, prob).statistic if len(rows) > 2 else float("nan")
    return {"n": len(rows), "spearman_abs_error_vs_max_prob": float(rho),
            "top_decile_size": len(top), "top_decile_argmax_k0_fraction": float(np.mean(ks[top] == 0))}


COMMANDS = {
    "posterior": cmd_posterior,
    "predict": cmd_predict,
    "benchmark": cmd_benchmark,
    "grid": cmd_grid,
    "outliers": cmd_outliers,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rows, meta = COMMANDS[args.command](args)
        write_atomic(render(rows, meta, args.format), args.output)
    except (UsageError, DataError, ConfigurationError, ValueError, TypeError, OSError,
            engine.ImpossibleDataError) as exc:
        print(f"bknn {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
