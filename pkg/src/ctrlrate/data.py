"""Study-level data: raw counts, derived log-rate observations, CSV ingestion."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

COUNTS_HEADER = ("deaths_treated", "py_treated", "deaths_control", "py_control")
OBS_HEADER = ("eta_obs", "xi_obs", "var_eta", "cov_etaxi1", "cov_etaxi2", "var_xi")
ZERO_EVENT_CORRECTION = 0.5
SYMMETRY_TOL = 1e-12


class DataError(ValueError):
    """Malformed or invalid study data."""


@dataclass(frozen=True)
class StudyCounts:
    deaths_treated: float
    person_years_treated: float
    deaths_control: float
    person_years_control: float

    def __post_init__(self):
        for name in ("person_years_treated", "person_years_control"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DataError(f"{name} must be positive, got {value!r}")
        for name in ("deaths_treated", "deaths_control"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise DataError(f"{name} must be a nonnegative count, got {value!r}")


@dataclass(frozen=True)
class StudyObservation:
    """Observed log event rates with their known within-study covariance.

    ``gamma`` is stored as a 2x2 tuple of tuples, ((var_eta, cov), (cov, var_xi)).
    """
    eta_hat: float
    xi_hat: float
    gamma: tuple

    def __post_init__(self):
        gm = np.asarray(self.gamma, dtype=float)
        if gm.shape != (2, 2) or not np.all(np.isfinite(gm)):
            raise DataError("gamma must be a finite 2x2 matrix")
        if abs(gm[0, 1] - gm[1, 0]) > SYMMETRY_TOL * max(1.0, abs(gm[0, 1])):
            raise DataError("gamma must be symmetric")
        if gm[0, 0] < 0 or gm[1, 1] < 0:
            raise DataError("gamma must have a nonnegative diagonal")
        if not (math.isfinite(self.eta_hat) and math.isfinite(self.xi_hat)):
            raise DataError("observed log rates must be finite")
        object.__setattr__(self, "gamma", tuple(tuple(float(v) for v in row) for row in gm))


def _correct_arm(deaths, person_years):
    if deaths == 0:
        return ZERO_EVENT_CORRECTION, person_years + ZERO_EVENT_CORRECTION
    return float(deaths), float(person_years)


def build_observation(counts: StudyCounts) -> StudyObservation:
    """Log event rates and their variances from one study's counts.

    An arm with zero events gets 0.5 added to both its count and its
    person-years before the log rate and the variance 1/count are formed.
    """
    dt, pt = _correct_arm(counts.deaths_treated, counts.person_years_treated)
    dc, pc = _correct_arm(counts.deaths_control, counts.person_years_control)
    return StudyObservation(
        eta_hat=math.log(dt / pt),
        xi_hat=math.log(dc / pc),
        gamma=((1.0 / dt, 0.0), (0.0, 1.0 / dc)),
    )


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of study observations.

    ``y`` (n x 2) and ``g`` (n x 3: g11, g12, g22) are the array views the
    numeric kernels consume.
    """
    studies: tuple
    y: np.ndarray = field(init=False, repr=False, compare=False)
    g: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        studies = tuple(self.studies)
        if len(studies) < 2:
            raise DataError(f"need at least 2 studies, got {len(studies)}")
        if len(studies) < 5:
            warnings.warn(f"only {len(studies)} studies; asymptotic statistics are fragile",
                          stacklevel=3)
        y = np.array([[s.eta_hat, s.xi_hat] for s in studies], dtype=float)
        g = np.array([[s.gamma[0][0], s.gamma[0][1], s.gamma[1][1]] for s in studies],
                     dtype=float)
        y.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "studies", studies)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "g", g)

    def __len__(self):
        return len(self.studies)

    @property
    def n(self) -> int:
        return len(self.studies)

    @classmethod
    def from_counts(cls, counts) -> "Dataset":
        return cls(tuple(build_observation(c) for c in counts))

    @classmethod
    def from_arrays(cls, eta, xi, var_eta, var_xi, cov=None) -> "Dataset":
        cov = np.zeros(len(eta)) if cov is None else cov
        return cls(tuple(
            StudyObservation(float(e), float(x), ((float(a), float(c)), (float(c), float(b))))
            for e, x, a, b, c in zip(eta, xi, var_eta, var_xi, cov)
        ))


# Hoes et al. hypertension trials: deaths and person-years, treated then control.
# Study 2 has zero control deaths and is corrected on ingestion.
HOES_COUNTS = (
    (10, 595.2, 21, 640.2),
    (2, 762.0, 0, 756.0),
    (54, 5635.0, 70, 5600.0),
    (47, 5135.0, 63, 4960.0),
    (53, 3760.0, 62, 4210.0),
    (10, 2233.0, 9, 2084.5),
    (25, 7056.1, 35, 6824.0),
    (47, 8099.0, 31, 8267.0),
    (43, 5810.0, 39, 5922.0),
    (25, 5397.0, 45, 5173.0),
    (157, 22162.7, 182, 22172.5),
    (92, 20885.0, 72, 20645.0),
)


def hoes_dataset() -> Dataset:
    return Dataset.from_counts(StudyCounts(*row) for row in HOES_COUNTS)


def _parse_float(raw, line, column):
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise DataError(f"line {line}, column {column!r}: not a number: {raw!r}") from None
    if not math.isfinite(value):
        raise DataError(f"line {line}, column {column!r}: non-finite value {raw!r}")
    return value


def load_csv(path) -> Dataset:
    """Read a dataset from CSV in either the counts or the observation schema.

    Counts schema header: ``deaths_treated,py_treated,deaths_control,py_control``.
    Observation schema header:
    ``eta_obs,xi_obs,var_eta,cov_etaxi1,cov_etaxi2,var_xi``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = tuple(cell.strip() for cell in rows[0])
    if header == COUNTS_HEADER:
        schema = "counts"
    elif header == OBS_HEADER:
        schema = "obs"
    else:
        raise DataError(f"{path}: unrecognized header {','.join(header)!r}; expected "
                        f"{','.join(COUNTS_HEADER)!r} or {','.join(OBS_HEADER)!r}")
    if len(rows) == 1:
        raise DataError(f"{path}: no data rows")

    studies = []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"line {line}: expected {len(header)} columns, got {len(row)}")
        vals = [_parse_float(raw, line, col) for raw, col in zip(row, header)]
        try:
            if schema == "counts":
                studies.append(build_observation(StudyCounts(*vals)))
            else:
                eta, xi, v11, c1, c2, v22 = vals
                if abs(c1 - c2) > SYMMETRY_TOL:
                    raise DataError("cov_etaxi1 and cov_etaxi2 differ")
                studies.append(StudyObservation(eta, xi, ((v11, c1), (c2, v22))))
        except DataError as exc:
            raise DataError(f"line {line}: {exc}") from None
    return Dataset(tuple(studies))


def write_csv(dataset: Dataset, path) -> None:
    """Write ``dataset`` in the observation schema."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(OBS_HEADER)
        for s in dataset.studies:
            writer.writerow([repr(s.eta_hat), repr(s.xi_hat), repr(s.gamma[0][0]),
                             repr(s.gamma[0][1]), repr(s.gamma[1][0]), repr(s.gamma[1][1])])
