"""Datasets: synthetic generators, embedded Galileo tables, CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed dataset files."""


@dataclass(frozen=True)
class Dataset:
    """N labeled rows: inputs x (N, d) and targets y (N,)."""

    x: np.ndarray
    y: np.ndarray
    name: str = ""
    units: str | None = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        y = np.asarray(self.y, dtype=np.float64).ravel()
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
        if x.shape[0] == 0:
            raise ValueError("dataset must contain at least one row")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise ValueError("dataset entries must all be finite")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def key(self) -> bytes:
        """Stable content hash used for fitness caching."""
        return self.x.tobytes() + self.y.tobytes()


SINE_X_HIGH = 1.5 * np.pi

# Galileo's free-fall measurements, in punti: (D, H) pairs.
_SHELF_TABLE = ((1500, 1000), (1340, 828), (1328, 800), (1172, 600), (800, 300))
_NO_SHELF_TABLE = (
    (573, 1000),
    (534, 800),
    (495, 600),
    (451, 450),
    (395, 300),
    (337, 200),
    (253, 100),
)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def generate_sine(n: int = 20, sigma: float = 0.5, seed=0) -> Dataset:
    """y = 2 sin(x0) + 3 + eps with x0 ~ Uniform(0, 3*pi/2), eps ~ N(0, sigma^2)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    rng = _rng(seed)
    x0 = rng.uniform(0.0, SINE_X_HIGH, size=n)
    eps = rng.normal(0.0, sigma, size=n) if sigma > 0 else np.zeros(n)
    y = 2.0 * np.sin(x0) + 3.0 + eps
    return Dataset(x=x0[:, None], y=y, name=f"sine(n={n},sigma={sigma})")


def sine_truth(x0: np.ndarray) -> np.ndarray:
    """Noise-free data-generating curve of the sine experiments."""
    return 2.0 * np.sin(np.asarray(x0, dtype=np.float64)) + 3.0


def galileo_shelf() -> Dataset:
    """Ramp-with-shelf experiment: x = drop height H, y = travel distance D."""
    d, h = np.array(_SHELF_TABLE, dtype=np.float64).T
    return Dataset(x=h[:, None], y=d, name="galileo_shelf", units="punti")


def galileo_no_shelf() -> Dataset:
    """Ramp-without-shelf experiment: x = travel distance D, y = drop height H."""
    d, h = np.array(_NO_SHELF_TABLE, dtype=np.float64).T
    return Dataset(x=d[:, None], y=h, name="galileo_no_shelf", units="punti")


def _no_shelf_curve(d: np.ndarray, k1: float, k2: float) -> np.ndarray:
    return k1 * d**2 / (1.0 + k2 * d)


@lru_cache(maxsize=1)
def no_shelf_least_squares() -> tuple[float, float, float]:
    """Least-squares (k1, k2) of H = k1*D^2/(1 + k2*D) plus residual std.

    Fit on the embedded no-shelf table; the residual standard deviation is
    what the synthetic generator uses as its noise scale.
    """
    from scipy.optimize import least_squares

    data = galileo_no_shelf()
    d, h = data.x[:, 0], data.y

    def resid(k):
        return _no_shelf_curve(d, k[0], k[1]) - h

    sol = least_squares(resid, x0=[1e-3, -1e-3], method="lm")
    k1, k2 = sol.x
    sigma = float(np.std(resid(sol.x)))
    return float(k1), float(k2), sigma


def generate_no_shelf_synthetic(seed=0) -> Dataset:
    """Synthetic no-shelf data: 7 draws D ~ Uniform(0, 800) plus Gaussian noise.

    Noise std equals the standard deviation of the Galileo-fit residuals, so
    the synthetic sets carry approximately the experiment's noise level but
    with exactly Gaussian errors.
    """
    k1, k2, sigma = no_shelf_least_squares()
    rng = _rng(seed)
    d = rng.uniform(0.0, 800.0, size=7)
    y = _no_shelf_curve(d, k1, k2) + rng.normal(0.0, sigma, size=7)
    return Dataset(x=d[:, None], y=y, name=f"no_shelf_synthetic(seed={seed})", units="punti")


def _expected_header(d: int) -> list[str]:
    return [f"x{j}" for j in range(d)] + ["y"]


def load_csv(path) -> Dataset:
    """Load a dataset from CSV with header ``x0,..,x{d-1},y``.

    Raises DatasetError naming the offending line for malformed headers,
    non-numeric cells, or ragged rows.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header != _expected_header(len(header) - 1):
            raise DatasetError(
                f"{path}: line 1: header must be x0,..,x{{d-1}},y (got {','.join(header)})"
            )
        ncols = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != ncols:
                raise DatasetError(f"{path}: line {lineno}: expected {ncols} cells, got {len(row)}")
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise DatasetError(f"{path}: line {lineno}: non-numeric cell in {row}") from None
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise DatasetError(f"{path}: non-finite values present")
    return Dataset(x=arr[:, :-1], y=arr[:, -1], name=path.stem)


def save_csv(dataset: Dataset, path) -> None:
    """Write a dataset using the same ``x0,..,x{d-1},y`` schema load_csv reads."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_expected_header(dataset.d))
        for xi, yi in zip(dataset.x, dataset.y):
            writer.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])
