"""Solution statistics, error reports and artifact file formats."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np

from sfvrom.config import (
    ArtifactIOError,
    ConfigurationError,
    NumericalError,
    log,
    raise_error,
)
from sfvrom.utils import dump_json

MATRIX_MAGIC = b"SFVM0001"
HEADER_BYTES = len(MATRIX_MAGIC) + 16
VARIANCE_TOL = 1e-12
CSV_FORMAT = "%.17g"


@dataclass
class FieldStats:
    """Mean and standard deviation per physical cell ``i`` and component ``p``."""

    x: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    names: Sequence[str]


@dataclass
class ErrorReport:
    per_component: Dict[str, float]
    aggregate: float
    order: Optional[float] = None
    ratio: Optional[float] = None
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "per_component": self.per_component,
            "aggregate": self.aggregate,
            "order": self.order,
            "ratio": self.ratio,
            **self.extras,
        }


def _values(U):
    return np.asarray(getattr(U, "values", U), dtype=float)


def _measures(measures):
    return np.asarray(getattr(measures, "stochastic", measures), dtype=float)


def mean(U, measures):
    """``sum_j U[i, j, p] |K_y^j|``, shape ``(N_x, n)``."""
    return np.einsum("ijp,j->ip", _values(U), _measures(measures))


def std(U, measures):
    """Square root of the cell-average second moment minus the squared mean."""
    values, weights = _values(U), _measures(measures)
    first = np.einsum("ijp,j->ip", values, weights)
    variance = np.einsum("ijp,j->ip", values**2, weights) - first**2
    if np.any(variance < -VARIANCE_TOL):
        raise_error(
            NumericalError,
            f"Negative variance estimate {variance.min():.3e} below tolerance.",
        )
    return np.sqrt(np.maximum(variance, 0.0))


def field_stats(U, measures, x, names) -> FieldStats:
    return FieldStats(x=np.asarray(x), mean=mean(U, measures), std=std(U, measures), names=tuple(names))


def primitive_stats(U, measures, x, law) -> FieldStats:
    """Mean/std of velocity and pressure computed from per-cell primitives."""
    primitive = law.to_primitive(_values(U))[..., 1:]
    return field_stats(primitive, measures, x, ("u", "p"))


def relative_l1(a, b, widths, names=None) -> ErrorReport:
    """``sum_i |K_x^i| |a_i - b_i| / sum_i |K_x^i| |b_i|`` per component and aggregated."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise_error(ConfigurationError, f"Cannot compare fields {a.shape} and {b.shape}.")
    a, b = a.reshape(len(a), -1), b.reshape(len(b), -1)
    widths = np.asarray(widths, dtype=float)
    numerators = widths @ np.abs(a - b)
    denominators = widths @ np.abs(b)
    if np.any(denominators == 0):
        raise_error(NumericalError, "Reference field has zero L1 norm.")
    names = names or [str(p) for p in range(a.shape[1])]
    return ErrorReport(
        per_component={name: float(num / den) for name, num, den in zip(names, numerators, denominators)},
        aggregate=float(numerators.sum() / denominators.sum()),
    )


def error_ratio(err_coarse, err_fine):
    if not (err_coarse > 0 and err_fine > 0):
        return None
    return float(err_coarse / err_fine)


def convergence_order(err_coarse, err_fine, factor=2.0):
    """``log(err_coarse / err_fine) / log(factor)``; ``None`` when undefined."""
    ratio = error_ratio(err_coarse, err_fine)
    if ratio is None:
        return None
    return float(np.log(ratio) / np.log(factor))


def write_matrix(path, matrix):
    """``SFVM0001``, rows and cols as little-endian u64, column-major little-endian f64."""
    if not str(path):
        raise_error(ArtifactIOError, "Empty path for matrix file.")
    matrix = np.atleast_2d(np.asarray(matrix, dtype="<f8"))
    if matrix.ndim != 2:
        raise_error(ArtifactIOError, f"Only 2D matrices can be written, got {matrix.shape}.")
    header = MATRIX_MAGIC + np.array(matrix.shape, dtype="<u8").tobytes()
    try:
        Path(path).write_bytes(header + matrix.tobytes(order="F"))
    except OSError as error:
        raise_error(ArtifactIOError, f"Cannot write matrix {path}: {error}")


def read_matrix(path):
    if not str(path):
        raise_error(ArtifactIOError, "Empty path for matrix file.")
    try:
        raw = Path(path).read_bytes()
    except OSError as error:
        raise_error(ArtifactIOError, f"Cannot read matrix {path}: {error}")
    if len(raw) < HEADER_BYTES or raw[: len(MATRIX_MAGIC)] != MATRIX_MAGIC:
        raise_error(ArtifactIOError, f"{path} is not a matrix file.")
    rows, cols = np.frombuffer(raw, dtype="<u8", count=2, offset=len(MATRIX_MAGIC))
    payload = raw[HEADER_BYTES:]
    if len(payload) != 8 * int(rows) * int(cols):
        raise_error(
            ArtifactIOError,
            f"{path}: header says {rows}x{cols} but payload has {len(payload)} bytes.",
        )
    data = np.frombuffer(payload, dtype="<f8").reshape((int(rows), int(cols)), order="F")
    return data.astype(float)


def _savetxt(path, header, table):
    try:
        np.savetxt(path, table, fmt=CSV_FORMAT, delimiter=",", header=header, comments="")
    except OSError as error:
        raise_error(ArtifactIOError, f"Cannot write {path}: {error}")


def write_csv(path, *stats: FieldStats):
    """``x, mean_<comp>..., std_<comp>...``; several stats are concatenated column-wise."""
    x = np.asarray(stats[0].x)
    names = [n for s in stats for n in s.names]
    means = [s.mean for s in stats]
    stds = [s.std for s in stats]
    if any(len(m) != len(x) for m in means + stds):
        raise_error(ConfigurationError, "CSV columns have unequal lengths.")
    header = ",".join(["x"] + [f"mean_{n}" for n in names] + [f"std_{n}" for n in names])
    _savetxt(path, header, np.column_stack([x] + means + stds))
    log.info(f"Wrote statistics to {path}")


def write_slice_csv(path, x, y, values, names):
    """Solution along ``x`` in one stochastic cell whose center is ``y``."""
    values = np.asarray(values, dtype=float).reshape(len(x), -1)
    y = np.atleast_1d(y)
    header = ",".join(["x"] + [f"y{d + 1}" for d in range(len(y))] + list(names))
    table = np.column_stack([x, np.tile(y, (len(x), 1)), values])
    _savetxt(path, header, table)


def write_table(path, header, rows):
    _savetxt(path, ",".join(header), np.array(rows, dtype=float).reshape(len(rows), len(header)))


def write_summary(path, summary: dict):
    dump_json(Path(path), summary)
    log.info(f"Wrote summary to {path}")


def read_stats_csv(path):
    """Header names and the numeric table of a statistics CSV."""
    try:
        with open(path) as f:
            header = f.readline().strip().split(",")
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as error:
        raise_error(ArtifactIOError, f"Cannot read statistics {path}: {error}")
    return header, table


def stats_means(path, names):
    """``(x, means)`` for components ``names`` from a statistics CSV."""
    header, table = read_stats_csv(path)
    missing = [n for n in names if f"mean_{n}" not in header]
    if missing:
        raise_error(ArtifactIOError, f"{path} has no mean columns for {missing}.")
    columns = [header.index(f"mean_{n}") for n in names]
    return table[:, 0], table[:, columns]
