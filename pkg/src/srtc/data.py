"""RSS fingerprint data: synthetic radio environments, CSV ingestion,
normalization, and splitting.

Synthetic readings follow a log-distance path-loss model with optional
Gaussian shadowing; readings below the detection floor or dropped at
random are replaced by the conventional missing marker of 100 dB.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

MISSING_MARKER_DB = 100.0
DEFAULT_MIN_RSS_DB = -104.0
DEFAULT_REF_POWER_DB = -30.0
DEFAULT_REF_DISTANCE_M = 1.0


class CsvFormatError(ValueError):
    """Malformed fingerprint CSV (bad cell, missing column, short row)."""


@dataclass
class EnvironmentConfig:
    n_anchors: int
    width_m: float = 40.0
    height_m: float = 25.0
    path_loss_exponent: float = 2.0
    ref_power_db: float = DEFAULT_REF_POWER_DB
    ref_distance_m: float = DEFAULT_REF_DISTANCE_M
    noise_std_db: float = 2.0
    dropout_prob: float = 0.1
    detection_floor_db: float = DEFAULT_MIN_RSS_DB

    def validate(self) -> None:
        if self.n_anchors < 1:
            raise ValueError(f"n_anchors must be >= 1, got {self.n_anchors}")
        if self.width_m <= 0 or self.height_m <= 0:
            raise ValueError(
                f"area bounds must be positive, got "
                f"{self.width_m} x {self.height_m}")
        if self.path_loss_exponent <= 0:
            raise ValueError("path_loss_exponent must be positive")
        if self.ref_distance_m <= 0:
            raise ValueError("ref_distance_m must be positive")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError(
                f"dropout_prob must be in [0, 1], got {self.dropout_prob}")
        if self.noise_std_db < 0:
            raise ValueError("noise_std_db must be nonnegative")


@dataclass
class SyntheticEnvironment:
    config: EnvironmentConfig
    anchors: np.ndarray  # (n_anchors, 2) positions in meters

    @property
    def n_anchors(self) -> int:
        return self.anchors.shape[0]


@dataclass
class RssNormalization:
    """Affine dB -> [0, 1] map; the missing marker collapses to 0."""

    min_rss_db: float = DEFAULT_MIN_RSS_DB
    missing_marker: float = MISSING_MARKER_DB

    def apply(self, x_db: np.ndarray) -> np.ndarray:
        scaled = (x_db - self.min_rss_db) / (0.0 - self.min_rss_db)
        return np.where(x_db == self.missing_marker, 0.0, scaled)

    def invert(self, x_unit: np.ndarray) -> np.ndarray:
        """Undo ``apply`` for non-missing values (0 maps back to min_rss)."""
        return x_unit * (0.0 - self.min_rss_db) + self.min_rss_db


@dataclass
class FingerprintDataset:
    x: np.ndarray  # (M, n_anchors) RSS readings
    y: np.ndarray  # (M, 2) locations in meters
    name: str = "dataset"
    missing_marker: float = MISSING_MARKER_DB
    normalization: RssNormalization | None = None
    source_seed: int | None = None

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        if self.x.ndim != 2 or self.y.ndim != 2 or self.y.shape[1] != 2:
            raise ValueError(
                f"bad dataset shapes x={self.x.shape} y={self.y.shape}")
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError(
                f"row mismatch: {self.x.shape[0]} fingerprints vs "
                f"{self.y.shape[0]} locations")

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    @property
    def n_anchors(self) -> int:
        return self.x.shape[1]


def generate_environment(config: EnvironmentConfig,
                         seed: int) -> SyntheticEnvironment:
    """Place anchors uniformly at random inside the area bounds."""
    config.validate()
    rng = np.random.default_rng(seed)
    anchors = np.column_stack([
        rng.uniform(0.0, config.width_m, size=config.n_anchors),
        rng.uniform(0.0, config.height_m, size=config.n_anchors),
    ])
    return SyntheticEnvironment(config, anchors)


def sample_fingerprints(env: SyntheticEnvironment, m: int, seed: int,
                        name: str = "synthetic") -> FingerprintDataset:
    """Draw M fingerprints at uniformly random locations.

    Per anchor: RSS = P0 - 10 n log10(max(d, d0)/d0) + N(0, sigma).
    Readings below the detection floor, or dropped with probability
    dropout_prob, become the missing marker.
    """
    if m < 1:
        raise ValueError(f"need at least one sample, got {m}")
    cfg = env.config
    rng = np.random.default_rng(seed)
    y = np.column_stack([
        rng.uniform(0.0, cfg.width_m, size=m),
        rng.uniform(0.0, cfg.height_m, size=m),
    ])
    diff = y[:, None, :] - env.anchors[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    dist = np.maximum(dist, cfg.ref_distance_m)
    rss = (cfg.ref_power_db
           - 10.0 * cfg.path_loss_exponent
           * np.log10(dist / cfg.ref_distance_m))
    if cfg.noise_std_db > 0:
        rss = rss + rng.normal(0.0, cfg.noise_std_db, size=rss.shape)
    dropped = rng.random(size=rss.shape) < cfg.dropout_prob
    missing = dropped | (rss < cfg.detection_floor_db)
    x = np.where(missing, MISSING_MARKER_DB, rss)
    return FingerprintDataset(x, y, name=name, source_seed=seed)


@dataclass
class CsvSchema:
    """Column layout of a fingerprint CSV.

    RSS columns are given explicitly or by prefix; the two coordinate
    columns are mapped to planar meters with a per-axis affine transform
    meters = (raw - offset) * scale.
    """

    rss_columns: list[str] | None = None
    rss_prefix: str | None = None
    x_column: str = "x_m"
    y_column: str = "y_m"
    x_offset: float = 0.0
    y_offset: float = 0.0
    x_scale: float = 1.0
    y_scale: float = 1.0
    missing_marker: float = MISSING_MARKER_DB

    def resolve_rss_columns(self, header: list[str]) -> list[str]:
        if self.rss_columns is not None:
            return list(self.rss_columns)
        if self.rss_prefix is not None:
            cols = [c for c in header if c.startswith(self.rss_prefix)]
            if not cols:
                raise CsvFormatError(
                    f"no columns match RSS prefix {self.rss_prefix!r}")
            return cols
        raise CsvFormatError("schema needs rss_columns or rss_prefix")


def load_csv(path, schema: CsvSchema, name: str | None = None
             ) -> FingerprintDataset:
    """Parse a fingerprint CSV into a dataset.

    The value 100 is preserved as the missing marker.  Malformed cells
    raise CsvFormatError naming the row and column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rss_cols = schema.resolve_rss_columns(header)
        wanted = rss_cols + [schema.x_column, schema.y_column]
        indices = {}
        for col in wanted:
            if col not in header:
                raise CsvFormatError(f"{path}: missing column {col!r}")
            indices[col] = header.index(col)
        rows_x, rows_y = [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{path}: line {line_no}: expected {len(header)} cells, "
                    f"got {len(row)}")
            try:
                rss = [float(row[indices[c]]) for c in rss_cols]
            except ValueError:
                bad = next(c for c in rss_cols
                           if not _is_number(row[indices[c]]))
                raise CsvFormatError(
                    f"{path}: line {line_no}: non-numeric cell in column "
                    f"{bad!r}: {row[indices[bad]]!r}") from None
            try:
                raw_x = float(row[indices[schema.x_column]])
                raw_y = float(row[indices[schema.y_column]])
            except ValueError:
                raise CsvFormatError(
                    f"{path}: line {line_no}: non-numeric coordinate") \
                    from None
            rows_x.append(rss)
            rows_y.append([(raw_x - schema.x_offset) * schema.x_scale,
                           (raw_y - schema.y_offset) * schema.y_scale])
    if not rows_x:
        raise CsvFormatError(f"{path}: no data rows")
    return FingerprintDataset(
        np.asarray(rows_x), np.asarray(rows_y),
        name=name or str(path), missing_marker=schema.missing_marker)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def save_csv(dataset: FingerprintDataset, path,
             rss_prefix: str = "WAP") -> None:
    """Write a dataset in the default schema (WAP columns then x_m,y_m)."""
    header = [f"{rss_prefix}{i:03d}" for i in range(dataset.n_anchors)]
    header += ["x_m", "y_m"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for xi, yi in zip(dataset.x, dataset.y):
            writer.writerow([repr(float(v)) for v in xi]
                            + [repr(float(v)) for v in yi])


def default_schema() -> CsvSchema:
    return CsvSchema(rss_prefix="WAP")


def normalize_rss(dataset: FingerprintDataset,
                  min_rss_db: float = DEFAULT_MIN_RSS_DB
                  ) -> FingerprintDataset:
    """Map dB readings to [0, 1]; missing readings become 0.

    The descriptor is recorded on the returned dataset so inference can
    apply the identical mapping.
    """
    if dataset.normalization is not None:
        raise ValueError(f"dataset {dataset.name!r} is already normalized")
    desc = RssNormalization(min_rss_db=min_rss_db,
                            missing_marker=dataset.missing_marker)
    present = dataset.x != dataset.missing_marker
    bad = present & ((dataset.x < min_rss_db) | (dataset.x > 0.0))
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValueError(
            f"dataset {dataset.name!r}: RSS {dataset.x[r, c]} dB at row {r} "
            f"column {c} outside [{min_rss_db}, 0]")
    return replace(dataset, x=desc.apply(dataset.x), normalization=desc)


def split(dataset: FingerprintDataset, train_fraction: float, seed: int
          ) -> tuple[FingerprintDataset, FingerprintDataset]:
    """Disjoint, covering, seed-deterministic train/test split."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(
            f"train_fraction must be in (0, 1), got {train_fraction}")
    m = dataset.n_samples
    perm = np.random.default_rng(seed).permutation(m)
    n_train = int(round(train_fraction * m))
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    train = replace(dataset, x=dataset.x[train_idx], y=dataset.y[train_idx],
                    name=f"{dataset.name}/train")
    test = replace(dataset, x=dataset.x[test_idx], y=dataset.y[test_idx],
                   name=f"{dataset.name}/test")
    return train, test
