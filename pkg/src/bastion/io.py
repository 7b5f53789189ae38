"""Configuration, series ingestion and result serialization.

Every writer formats floats with ``repr`` precision (``%.17g``) and uses
``\\n`` line endings, so files produced from identical inputs are
byte-identical.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DataError

log = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "n/a", "-"})

DRAWS_MAGIC = b"BSTN"
DRAWS_VERSION = 1
#: Header: magic, version (uint32), then N, P, n_save (uint64), little-endian.
DRAWS_HEADER = struct.Struct("<4sIQQQ")
#: Per-draw blocks in file order with their trailing shape given (N, P).
DRAWS_BLOCKS = (
    ("T", lambda n, p: (n,)),
    ("S", lambda n, p: (p, n)),
    ("zeta", lambda n, p: (n,)),
    ("nu", lambda n, p: (n,)),
    ("sigma_y", lambda n, p: ()),
    ("tau_T", lambda n, p: ()),
    ("tau_S", lambda n, p: (p,)),
    ("tau_zeta", lambda n, p: ()),
    ("mu", lambda n, p: ()),
    ("phi", lambda n, p: ()),
    ("sigma_nu", lambda n, p: ()),
)


def fmt(value):
    """Shortest round-tripping text for a float."""
    value = float(value)
    if math.isnan(value):
        return "nan"
    return repr(value)


# ---------------------------------------------------------------------------
# configuration


def parse_periods(value):
    """Periods from ``"12,40"``, a list, or ``None``; returned sorted."""
    if value is None:
        return ()
    if isinstance(value, str):
        parts = [p for p in value.replace(" ", "").split(",") if p]
    else:
        parts = list(value)
    try:
        periods = tuple(sorted(int(p) for p in parts))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"periods must be integers, got {value!r}") from exc
    return periods


@dataclass
class RunConfig:
    """Settings of one ``decompose`` run.

    Round-trips through :meth:`to_dict` / :meth:`from_dict` unchanged.
    """

    input: str | None = None
    column: str | None = None
    time_column: str | None = None
    periods: tuple = ()
    include_outliers: bool = True
    include_sv: bool = True
    burn: int = 2000
    save: int = 3000
    thin: int = 1
    seed: int = 0
    level: float = 0.95
    out: str = "bastion_out"
    emit_draws: bool = False
    model: dict = field(default_factory=dict)

    def __post_init__(self):
        self.periods = parse_periods(self.periods)
        if not 0.0 < float(self.level) < 1.0:
            raise ConfigError(f"level must lie in (0, 1), got {self.level}")
        self.level = float(self.level)
        for name in ("burn", "save", "thin", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ConfigError(f"{name} must be an integer, got {value!r}")
            setattr(self, name, int(value))
        self.model = dict(self.model or {})

    def to_dict(self):
        out = asdict(self)
        out["periods"] = list(self.periods)
        return out

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data)

    def model_spec(self, n):
        """The :class:`~bastion.gibbs.ModelSpec` for a series of length ``n``."""
        from .gibbs import ModelSpec

        extra = dict(self.model)
        for key in ("n", "periods", "include_outliers", "include_sv", "n_burn", "n_save",
                    "thin", "seed"):
            if key in extra:
                raise ConfigError(f"model setting {key!r} must be given at the top level")
        return ModelSpec(n=n, periods=self.periods, include_outliers=self.include_outliers,
                         include_sv=self.include_sv, n_burn=self.burn, n_save=self.save,
                         thin=self.thin, seed=self.seed, **extra)


def load_json(path):
    """Read a JSON object from ``path``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"configuration file not found: {path}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


def dump_json(data, path):
    """Write ``data`` as sorted, indented JSON with a trailing newline."""
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# series ingestion


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_series(path, column=None, time_column=None, periods=()):
    """Read one numeric column of a CSV file.

    Parameters
    ----------
    path : str or Path
    column : str or int, optional
        Header name or zero-based index of the value column. Defaults to
        the last column.
    time_column : str or int, optional
        Column copied verbatim as time labels. Defaults to the first column
        when the file has more than one column, otherwise ``1..N``.
    periods : sequence of int, optional
        Only used to warn when fewer than ``3 * max(periods)`` values are
        present.

    Returns
    -------
    values : numpy.ndarray
    times : list of str

    Raises
    ------
    DataError
        Missing file or column, or non-numeric values. The message lists
        the offending line numbers (1-based, counting the header line).

    Notes
    -----
    The first line is a header when its value field is not a number and
    is not a missing-value token.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8-sig") as fh:
            rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if any(c.strip() for c in r)]
    except FileNotFoundError as exc:
        raise DataError(f"input file not found: {path}") from exc
    if not rows:
        raise DataError(f"{path}: file is empty")

    first = [c.strip() for c in rows[0][1]]
    has_header = any(not _is_number(c) and c.lower() not in MISSING_TOKENS for c in first)
    header = first if has_header else None
    body = rows[1:] if has_header else rows
    width = len(first)

    def resolve(col, default):
        if col is None:
            return default
        if isinstance(col, int) or (isinstance(col, str) and col.isdigit() and
                                    (header is None or col not in header)):
            idx = int(col)
        elif header is not None and col in header:
            idx = header.index(col)
        else:
            raise DataError(f"{path}: column {col!r} not found"
                            + (f" (columns: {header})" if header else ""))
        if not 0 <= idx < width:
            raise DataError(f"{path}: column index {idx} out of range (file has {width})")
        return idx

    vcol = resolve(column, width - 1)
    tcol = resolve(time_column, 0 if width > 1 else None)
    if tcol == vcol:
        tcol = None

    values, times, bad = [], [], []
    for line, row in body:
        cell = row[vcol].strip() if vcol < len(row) else ""
        try:
            value = float(cell)
        except ValueError:
            value = float("nan")
        if not math.isfinite(value):
            bad.append(line)
            continue
        values.append(value)
        times.append(row[tcol].strip() if tcol is not None and tcol < len(row) else None)
    if bad:
        shown = ", ".join(str(b) for b in bad[:10]) + (" ..." if len(bad) > 10 else "")
        raise DataError(f"{path}: non-numeric or non-finite values at row {shown}")
    if not values:
        raise DataError(f"{path}: no observations")
    if tcol is None:
        times = [str(i + 1) for i in range(len(values))]
    periods = parse_periods(periods)
    if periods and len(values) < 3 * max(periods):
        log.warning("series has %d observations, fewer than three cycles of period %d",
                    len(values), max(periods))
    return np.asarray(values, dtype=float), times


# ---------------------------------------------------------------------------
# tabular writers


def write_csv(path, header, columns):
    """Write equal-length columns; floats use :func:`fmt`, other values ``str``."""
    n = len(columns[0]) if columns else 0
    if any(len(c) != n for c in columns):
        raise ConfigError("columns differ in length")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(n):
            writer.writerow([fmt(c[i]) if isinstance(c[i], (float, np.floating)) else str(c[i])
                             for c in columns])


def components_table(summary, y, times, periods):
    """Header and columns of ``components.csv``.

    Columns: time, trend mean/lower/upper, mean/lower/upper for each
    seasonal period, outlier mean, volatility mean/lower/upper and the
    remainder ``y - trend - seasonals - outliers`` of the posterior means.
    That is ``1 + 3 + 3P + 1 + 3 + 1`` columns.
    """
    def triple(prefix, iv):
        return [f"{prefix}_mean", f"{prefix}_lower", f"{prefix}_upper"], [iv.mean, iv.lower, iv.upper]

    header, cols = ["time"], [list(times)]
    h, c = triple("trend", summary.trend)
    header += h
    cols += c
    for k, iv in zip(periods, summary.seasonals):
        h, c = triple(f"seasonal{k}", iv)
        header += h
        cols += c
    header.append("outlier_mean")
    cols.append(summary.outliers.mean)
    h, c = triple("volatility", summary.volatility)
    header += h
    cols += c
    remainder = y - summary.trend.mean - summary.seasonal_total.mean - summary.outliers.mean
    header.append("remainder")
    cols.append(remainder)
    return header, [[float(v) if not isinstance(v, str) else v for v in col] for col in cols]


def write_components(path, summary, y, times, periods):
    header, cols = components_table(summary, y, times, periods)
    write_csv(path, header, cols)


def write_plotdata(directory, summary, y, times, periods):
    """Per-figure CSV files for external plotting.

    ``observed.csv`` (series with the signal band), ``trend.csv``,
    ``seasonal<k>.csv`` per period, ``outliers.csv`` and ``volatility.csv``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    t = list(times)

    def band(name, iv, extra=()):
        header = ["time"] + [e[0] for e in extra] + ["mean", "lower", "upper"]
        cols = [t] + [list(map(float, e[1])) for e in extra] + [
            list(map(float, iv.mean)), list(map(float, iv.lower)), list(map(float, iv.upper))]
        write_csv(directory / f"{name}.csv", header, cols)

    band("observed", summary.signal, extra=[("y", y)])
    band("trend", summary.trend)
    for k, iv in zip(periods, summary.seasonals):
        band(f"seasonal{k}", iv)
    band("outliers", summary.outliers)
    band("volatility", summary.volatility)


# ---------------------------------------------------------------------------
# binary draws


def write_draws(path, draws):
    """Write every saved draw in the versioned little-endian layout.

    The header is ``b"BSTN"``, a uint32 version and uint64 ``N``, ``P``
    and ``n_save``. Then, for each block of :data:`DRAWS_BLOCKS` in order,
    ``n_save`` rows of 64-bit floats in row-major order.
    """
    n_save, n = draws.T.shape
    p = draws.S.shape[1]
    with Path(path).open("wb") as fh:
        fh.write(DRAWS_HEADER.pack(DRAWS_MAGIC, DRAWS_VERSION, n, p, n_save))
        for name, shape in DRAWS_BLOCKS:
            block = np.asarray(getattr(draws, name), dtype="<f8").reshape((n_save,) + shape(n, p))
            fh.write(np.ascontiguousarray(block).tobytes())


def read_draws(path):
    """Read a file written by :func:`write_draws` into a dict of arrays."""
    raw = Path(path).read_bytes()
    if len(raw) < DRAWS_HEADER.size:
        raise DataError(f"{path}: truncated draws header")
    magic, version, n, p, n_save = DRAWS_HEADER.unpack_from(raw)
    if magic != DRAWS_MAGIC:
        raise DataError(f"{path}: not a draws file (magic {magic!r})")
    if version != DRAWS_VERSION:
        raise DataError(f"{path}: unsupported draws version {version}")
    out = {"N": n, "P": p, "n_save": n_save}
    offset = DRAWS_HEADER.size
    for name, shape in DRAWS_BLOCKS:
        full = (n_save,) + shape(n, p)
        count = int(np.prod(full))
        if offset + 8 * count > len(raw):
            raise DataError(f"{path}: truncated block {name!r}")
        out[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(full)
        offset += 8 * count
    if offset != len(raw):
        raise DataError(f"{path}: {len(raw) - offset} trailing bytes")
    return out


def summary_document(draws, summary, config, backend):
    """Contents of ``summary.json``."""
    return {
        "config": config.to_dict(),
        "model": draws.spec.to_dict(),
        "level": summary.level,
        "scalars": summary.scalars,
        "phi_acceptance": None if math.isnan(draws.phi_acceptance) else draws.phi_acceptance,
        "runtime_seconds": draws.runtime,
        "seed": config.seed,
        "backend": backend,
    }


__all__ = ["RunConfig", "parse_periods", "load_json", "dump_json", "read_series",
           "write_csv", "components_table", "write_components", "write_plotdata",
           "write_draws", "read_draws", "summary_document", "fmt"]
