"""CSV ingestion, standardisation, splits and data-driven priors."""

from __future__ import annotations

import csv
import hashlib
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .model import ModelParams, normal_known_variance


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Schema:
    """Column layout of a CSV file.

    Columns are named by header entry, or by 0-based position when the file
    has no header. ``features=None`` means every column except the response.
    """

    response: str
    kind: str = "class"  # "class" or "real"
    features: Optional[tuple[str, ...]] = None
    delimiter: str = ","
    header: bool = True
    classes: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.kind not in ("class", "real"):
            raise ValueError(f"response kind must be 'class' or 'real', got {self.kind!r}")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    kind: str
    classes: tuple[str, ...] = ()
    source: str = field(default="", compare=False)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def subset(self, idx) -> "Dataset":
        return replace(self, X=self.X[idx], y=self.y[idx])

    def with_features(self, X: np.ndarray) -> "Dataset":
        return replace(self, X=X)

    def labels(self, codes) -> list:
        """Map integer class codes (or real values) back to printable labels."""
        if self.kind == "class":
            return [self.classes[int(c)] for c in codes]
        return list(codes)


def file_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_csv(path, schema: Schema) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=schema.delimiter)]
    first = 1 if schema.header else 0
    if len(rows) <= first:
        raise DataError(f"{path}: no data rows")
    names = [c.strip() for c in rows[0]] if schema.header else [str(i) for i in range(len(rows[0]))]

    def col(name: str) -> int:
        try:
            return names.index(name)
        except ValueError:
            raise DataError(f"{path}: no column {name!r} (have {names})") from None

    ycol = col(schema.response)
    fcols = [col(f) for f in schema.features] if schema.features else [
        i for i in range(len(names)) if i != ycol
    ]
    classes = list(schema.classes) if schema.classes else []
    fixed_alphabet = schema.classes is not None
    X = np.empty((len(rows) - first, len(fcols)))
    y = []
    for r, row in enumerate(rows[first:]):
        lineno = r + first + 1
        if len(row) != len(names):
            raise DataError(f"{path}:{lineno}: expected {len(names)} fields, got {len(row)}")
        try:
            X[r] = [float(row[i]) for i in fcols]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        value = row[ycol].strip()
        if schema.kind == "real":
            try:
                y.append(float(value))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
        else:
            if value not in classes:
                if fixed_alphabet:
                    raise DataError(f"{path}:{lineno}: unknown class label {value!r}")
                classes.append(value)
            y.append(classes.index(value))
    y = np.asarray(y, dtype=float if schema.kind == "real" else int)
    return Dataset(X, y, tuple(names[i] for i in fcols), schema.kind, tuple(classes), str(path))


def save_csv(ds: Dataset, path, delimiter: str = ",", response: str = "response") -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow([*ds.feature_names, response])
        for x, label in zip(ds.X, ds.labels(ds.y)):
            w.writerow([*(repr(float(v)) for v in x), label if ds.kind == "class" else repr(float(label))])


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.scale + self.mean

    def apply(self, ds: Dataset) -> Dataset:
        return ds.with_features(self.transform(ds.X))


def standardize(train: Dataset) -> tuple[Standardizer, Dataset]:
    """Fit per-feature centring and scaling on ``train`` only."""
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)
    constant = std == 0
    if constant.any():
        names = [n for n, c in zip(train.feature_names, constant) if c]
        warnings.warn(f"constant feature(s) {names} left unscaled", stacklevel=2)
        mean = np.where(constant, 0.0, mean)
        std = np.where(constant, 1.0, std)
    t = Standardizer(mean, std)
    return t, t.apply(train)


def default_regression_prior(train: Dataset) -> ModelParams:
    """Normal prior with mean, mean variance and noise variance all taken
    from the training responses (sample variance)."""
    if train.kind != "real":
        raise DataError("regression prior needs a real-valued response")
    if len(train) < 2:
        raise DataError("need at least two rows to estimate a variance")
    var = float(np.var(train.y, ddof=1))
    if var == 0:
        raise DataError("training responses have zero variance")
    return normal_known_variance(float(np.mean(train.y)), var, var)


def split(ds: Dataset, test_fraction: float = 0.2, seed: int = 0) -> tuple[Dataset, Dataset]:
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(ds))
    n_test = int(round(test_fraction * len(ds)))
    return ds.subset(np.sort(order[n_test:])), ds.subset(np.sort(order[:n_test]))


# -- bundled and known datasets ----------------------------------------------

RIPLEY_SCHEMA = Schema(response="yc", kind="class", features=("xs", "ys"), classes=("0", "1"))
CCPP_SCHEMA = Schema(response="PE", kind="real", features=("AT", "V", "AP", "RH"))


def ripley_paths() -> tuple[Path, Path]:
    base = resources.files("bayesknn") / "datasets"
    return Path(str(base / "ripley_train.csv")), Path(str(base / "ripley_test.csv"))


def load_ripley() -> tuple[Dataset, Dataset]:
    """Ripley's synthetic two-class data, standard 250/1000 split."""
    tr, te = ripley_paths()
    return load_csv(tr, RIPLEY_SCHEMA), load_csv(te, RIPLEY_SCHEMA)


def load_ccpp(path, seed: int = 0, test_fraction: float = 0.2) -> tuple[Dataset, Dataset]:
    """Combined-cycle power plant data (columns AT, V, AP, RH, PE), split
    with a seeded shuffle."""
    ds = load_csv(path, CCPP_SCHEMA)
    return split(ds, test_fraction, seed)
