"""Longitudinal dataset container, CSV ingestion and run configuration.

The on-disk format is a long CSV with one row per (observation, time):

    obs_id,group,time,<var_1>,...,<var_p>

Values are held in memory as an ``(n, M, p)`` array indexed by
observation, time point and variable.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

RESERVED_COLUMNS = ("obs_id", "time")


class DataError(ValueError):
    """Raised when a dataset file or array is malformed."""


class ConfigError(ValueError):
    """Raised for an invalid configuration; ``field`` names the culprit."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True, eq=False)
class LongitudinalDataset:
    values: np.ndarray  # (n, M, p)
    obs_ids: tuple
    group: tuple
    variable_names: tuple
    time_labels: tuple
    center: np.ndarray | None = None  # (M, p) means removed by center_per_time
    scale: np.ndarray | None = None  # (M, p) sds divided out by scale_per_time

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3:
            raise DataError(f"values must be 3-D (n, M, p), got shape {values.shape}")
        n, M, p = values.shape
        if not np.all(np.isfinite(values)):
            i, m, k = np.argwhere(~np.isfinite(values))[0]
            raise DataError(
                f"non-finite value for obs {self.obs_ids[i]}, time {self.time_labels[m]}, "
                f"variable {self.variable_names[k]}"
            )
        if len(self.obs_ids) != n or len(self.group) != n:
            raise DataError("obs_ids and group must have one entry per observation")
        if len(self.variable_names) != p:
            raise DataError("variable_names must have one entry per variable")
        if len(self.time_labels) != M:
            raise DataError("time_labels must have one entry per time point")
        if M < 2:
            raise DataError(f"at least 2 time points are required, got {M}")
        if len(set(self.obs_ids)) != n:
            raise DataError("obs_ids must be unique")
        keys = [_time_key(t) for t in self.time_labels]
        if any(a >= b for a, b in zip(keys, keys[1:])):
            raise DataError(f"time_labels must be strictly increasing: {self.time_labels}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def M(self) -> int:
        return self.values.shape[1]

    @property
    def p(self) -> int:
        return self.values.shape[2]

    @property
    def groups(self) -> list:
        """Distinct group labels in order of first appearance."""
        return list(dict.fromkeys(self.group))

    def by_time(self) -> np.ndarray:
        """Values rearranged as ``(M, n, p)``."""
        return np.ascontiguousarray(self.values.transpose(1, 0, 2))

    def raw_values(self) -> np.ndarray:
        """Undo any centering/scaling applied by this module."""
        out = np.array(self.values)
        if self.scale is not None:
            out = out * self.scale[None]
        if self.center is not None:
            out = out + self.center[None]
        return out


def _time_key(label):
    try:
        return (0, float(label), "")
    except (TypeError, ValueError):
        return (1, 0.0, str(label))


def load_dataset(path, group_column: str = "group") -> LongitudinalDataset:
    """Read a long-format CSV into a validated :class:`LongitudinalDataset`."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for col in (*RESERVED_COLUMNS, group_column):
            if col not in header:
                raise DataError(f"{path}: header lacks required column '{col}'")
        id_col = header.index("obs_id")
        time_col = header.index("time")
        grp_col = header.index(group_column)
        var_cols = [j for j, h in enumerate(header) if j not in (id_col, time_col, grp_col)]
        if not var_cols:
            raise DataError(f"{path}: no variable columns")
        var_names = tuple(header[j] for j in var_cols)

        cells = {}
        group_of = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}, row {lineno}: expected {len(header)} columns, got {len(row)}"
                )
            obs, t, g = row[id_col].strip(), row[time_col].strip(), row[grp_col].strip()
            if (obs, t) in cells:
                raise DataError(f"{path}, row {lineno}: duplicate entry for obs {obs}, time {t}")
            if group_of.setdefault(obs, g) != g:
                raise DataError(
                    f"{path}, row {lineno}: obs {obs} has conflicting group labels "
                    f"'{group_of[obs]}' and '{g}'"
                )
            vals = []
            for j in var_cols:
                try:
                    v = float(row[j])
                except ValueError:
                    raise DataError(
                        f"{path}, row {lineno}, column '{header[j]}': "
                        f"non-numeric value {row[j]!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(
                        f"{path}, row {lineno}, column '{header[j]}': non-finite value {row[j]!r}"
                    )
                vals.append(v)
            cells[(obs, t)] = vals

    if not cells:
        raise DataError(f"{path}: no data rows")
    obs_ids = tuple(group_of)
    times = tuple(sorted({t for _, t in cells}, key=_time_key))
    values = np.empty((len(obs_ids), len(times), len(var_names)))
    for i, obs in enumerate(obs_ids):
        for m, t in enumerate(times):
            try:
                values[i, m] = cells[(obs, t)]
            except KeyError:
                raise DataError(f"{path}: missing row for obs {obs}, time {t}") from None
    return LongitudinalDataset(
        values=values,
        obs_ids=obs_ids,
        group=tuple(group_of[o] for o in obs_ids),
        variable_names=var_names,
        time_labels=times,
    )


def write_dataset(ds: LongitudinalDataset, path, group_column: str = "group") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["obs_id", group_column, "time", *ds.variable_names])
        for i, obs in enumerate(ds.obs_ids):
            for m, t in enumerate(ds.time_labels):
                writer.writerow([obs, ds.group[i], t, *(repr(float(v)) for v in ds.values[i, m])])


def subset_by_group(ds: LongitudinalDataset, label) -> LongitudinalDataset:
    keep = [i for i, g in enumerate(ds.group) if g == label]
    if not keep:
        raise DataError(f"unknown group label {label!r}; available: {ds.groups}")
    return replace(
        ds,
        values=ds.values[keep],
        obs_ids=tuple(ds.obs_ids[i] for i in keep),
        group=tuple(ds.group[i] for i in keep),
    )


def center_per_time(ds: LongitudinalDataset) -> LongitudinalDataset:
    """Remove the across-observation mean of every (time, variable) cell.

    The removed means accumulate in ``ds.center`` so the operation can be
    undone with :meth:`LongitudinalDataset.raw_values`.
    """
    if ds.scale is not None:
        raise DataError("center before scaling")
    means = ds.values.mean(axis=0)
    centered = ds.values - means[None]
    # second pass mops up rounding left by the first subtraction
    centered = centered - centered.mean(axis=0)[None]
    total = means if ds.center is None else ds.center + means
    return replace(ds, values=centered, center=total)


def scale_per_time(ds: LongitudinalDataset) -> LongitudinalDataset:
    """Divide each (time, variable) cell by its across-observation sd."""
    sd = ds.values.std(axis=0, ddof=1)
    sd = np.where(sd > 0, sd, 1.0)
    return replace(ds, values=ds.values / sd[None], scale=sd)


def prepare(ds: LongitudinalDataset, center: bool = True, scale: str | None = None):
    if center:
        ds = center_per_time(ds)
    if scale == "unit-variance":
        ds = scale_per_time(ds)
    elif scale not in (None, "none"):
        raise ConfigError("data.scale", f"unknown scaling {scale!r}")
    return ds


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class PriorConfig:
    loading_prior_cov_scale: float = 1.0
    nu_mean: float = 0.0
    nu_var: float = 10.0
    mu_mean: float = 0.0
    mu_var: float = 10.0
    ig_alpha: float = 6.0
    ig_beta: float = 0.5
    phi_mean: float = 0.75
    phi_var: float = 0.1

    def __post_init__(self):
        for name in ("loading_prior_cov_scale", "nu_var", "mu_var", "ig_alpha", "ig_beta", "phi_var"):
            _check_positive(f"prior.{name}", getattr(self, name))
        for name in ("nu_mean", "mu_mean", "phi_mean"):
            _check_finite(f"prior.{name}", getattr(self, name))


@dataclass(frozen=True)
class StepScales:
    # random-walk scales; for eta/lambda this is the companion step after each Taylor proposal
    eta: float = 0.5
    lam: float = 0.5
    phi: float = 0.3

    def __post_init__(self):
        for name in ("eta", "lam", "phi"):
            _check_positive(f"mcmc.mh_step_scales.{name}", getattr(self, name))


@dataclass(frozen=True)
class McmcConfig:
    q: int = 2
    n_iterations: int = 500_000
    thin: int = 500
    burn_in_raw: int = 5_000
    seed: int = 0
    mh_step_scales: StepScales = field(default_factory=StepScales)

    def __post_init__(self):
        for name in ("q", "n_iterations", "thin", "burn_in_raw", "seed"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ConfigError(f"mcmc.{name}", f"must be an integer, got {v!r}")
        if self.q < 1:
            raise ConfigError("mcmc.q", "must be >= 1")
        if self.thin < 1:
            raise ConfigError("mcmc.thin", "must be >= 1")
        if self.burn_in_raw < 0:
            raise ConfigError("mcmc.burn_in_raw", "must be >= 0")
        if self.burn_in_raw >= self.n_iterations:
            raise ConfigError("mcmc.burn_in_raw", "must be smaller than n_iterations")
        if self.n_retained < 1:
            raise ConfigError("mcmc.thin", "configuration retains no samples")
        if self.seed < 0:
            raise ConfigError("mcmc.seed", "must be non-negative")

    @property
    def n_retained(self) -> int:
        return (self.n_iterations - self.burn_in_raw) // self.thin


@dataclass(frozen=True)
class DataConfig:
    group_column: str = "group"
    center: bool = True
    scale: str | None = None

    def __post_init__(self):
        if self.scale not in (None, "none", "unit-variance"):
            raise ConfigError("data.scale", f"unknown scaling {self.scale!r}")
        if not isinstance(self.center, bool):
            raise ConfigError("data.center", "must be true or false")


@dataclass(frozen=True)
class RunConfig:
    prior: PriorConfig = field(default_factory=PriorConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def to_dict(self) -> dict:
        return asdict(self)


def _check_positive(name, v):
    _check_finite(name, v)
    if v <= 0:
        raise ConfigError(name, f"must be positive, got {v!r}")


def _check_finite(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, float, np.floating, np.integer)):
        raise ConfigError(name, f"must be a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(name, f"must be finite, got {v!r}")


def _build(cls, section: str, raw):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(section, "must be a JSON object")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"{section}.{key}", "unknown field")
        if cls is McmcConfig and key == "mh_step_scales":
            value = _build(StepScales, f"{section}.{key}", value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(section, str(exc)) from None


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    for key in raw:
        if key not in ("prior", "mcmc", "data"):
            raise ConfigError(key, "unknown section")
    return RunConfig(
        prior=_build(PriorConfig, "prior", raw.get("prior")),
        mcmc=_build(McmcConfig, "mcmc", raw.get("mcmc")),
        data=_build(DataConfig, "data", raw.get("data")),
    )


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    return config_from_dict(raw)
