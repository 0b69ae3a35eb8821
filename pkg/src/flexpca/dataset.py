"""Observation sets on a rectangular grid.

The central type is :class:`ObservationSet`: a list of ``(row, col,
value)`` triples on an ``n_rows`` by ``n_cols`` grid, with no duplicate
cells. Entries are stored as parallel numpy arrays in canonical
row-major order, which makes equality, file round-trips, and seeded
subsampling reproducible.

File formats
------------
* Coordinate CSV: header ``row,col,value``, one observed cell per line.
* Dense CSV: a rectangular numeric grid where a configurable token
  (default ``"NA"``) marks unobserved cells.
"""

import csv

import numpy as np

from .errors import CoverageError, DataError

__all__ = [
    "ObservationSet",
    "SplitSet",
    "load_coordinate_csv",
    "write_coordinate_csv",
    "load_dense_csv",
    "window_minus_window",
    "apply_missing_mechanism",
    "random_split",
    "compact",
]


class ObservationSet:
    """Observed cells of a partially observed ``n_rows`` x ``n_cols`` grid.

    Parameters
    ----------
    n_rows, n_cols : int
        Grid dimensions; must be positive.
    rows, cols : array_like of int
        Cell coordinates, 0-based.
    values : array_like of float
        Observed values, one per cell.

    Entries are sorted into row-major order and the coordinate arrays are
    made read-only. Duplicate cells raise :class:`DataError`. An empty
    set is rejected unless ``allow_empty=True`` (used only by windowing
    with an explicit opt-in).
    """

    def __init__(self, n_rows, n_cols, rows, cols, values, *, allow_empty=False):
        n_rows = int(n_rows)
        n_cols = int(n_cols)
        if n_rows <= 0 or n_cols <= 0:
            raise DataError("grid dimensions must be positive")
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if not (rows.size == cols.size == values.size):
            raise DataError("rows, cols and values must have equal length")
        if rows.size == 0 and not allow_empty:
            raise DataError("observation set has no observations")
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_rows:
                raise DataError(
                    f"row index out of range [0, {n_rows}): "
                    f"{rows[(rows < 0) | (rows >= n_rows)][0]}"
                )
            if cols.min() < 0 or cols.max() >= n_cols:
                raise DataError(
                    f"col index out of range [0, {n_cols}): "
                    f"{cols[(cols < 0) | (cols >= n_cols)][0]}"
                )
        if not np.all(np.isfinite(values)):
            raise DataError("observed values must be finite")

        code = rows * np.int64(n_cols) + cols
        order = np.argsort(code, kind="stable")
        code = code[order]
        dup = np.nonzero(np.diff(code) == 0)[0]
        if dup.size:
            r, c = divmod(int(code[dup[0]]), n_cols)
            raise DataError(f"duplicate observation at cell ({r}, {c})")

        self.n_rows = n_rows
        self.n_cols = n_cols
        self.rows = rows[order]
        self.cols = cols[order]
        self.values = values[order]
        for a in (self.rows, self.cols, self.values):
            a.setflags(write=False)

    @classmethod
    def from_dense(cls, matrix, *, allow_empty=False):
        """Build a set from a 2-D array; NaN cells are unobserved."""
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2:
            raise DataError("dense input must be a 2-D array")
        rows, cols = np.nonzero(~np.isnan(matrix))
        return cls(
            matrix.shape[0],
            matrix.shape[1],
            rows,
            cols,
            matrix[rows, cols],
            allow_empty=allow_empty,
        )

    @property
    def n_obs(self):
        return self.rows.size

    def cover_rows(self):
        """Observation count per row, length ``n_rows``."""
        return np.bincount(self.rows, minlength=self.n_rows)

    def cover_cols(self):
        """Observation count per column, length ``n_cols``."""
        return np.bincount(self.cols, minlength=self.n_cols)

    def to_dense(self, fill=np.nan):
        """Dense matrix with ``fill`` at unobserved cells."""
        out = np.full((self.n_rows, self.n_cols), fill, dtype=float)
        out[self.rows, self.cols] = self.values
        return out

    def select(self, mask, *, allow_empty=False):
        """New set keeping the entries where ``mask`` is True."""
        mask = np.asarray(mask, dtype=bool)
        return ObservationSet(
            self.n_rows,
            self.n_cols,
            self.rows[mask],
            self.cols[mask],
            self.values[mask],
            allow_empty=allow_empty,
        )

    def cell_codes(self):
        """Row-major linear index of each entry (sorted, unique)."""
        return self.rows * np.int64(self.n_cols) + self.cols

    def __eq__(self, other):
        if not isinstance(other, ObservationSet):
            return NotImplemented
        return (
            self.n_rows == other.n_rows
            and self.n_cols == other.n_cols
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.n_rows, self.n_cols, self.n_obs))

    def __repr__(self):
        return (
            f"ObservationSet(n_rows={self.n_rows}, n_cols={self.n_cols}, "
            f"n_obs={self.n_obs})"
        )


class SplitSet:
    """A disjoint train/test partition of one observation set."""

    def __init__(self, train, test):
        self.train = train
        self.test = test


def load_coordinate_csv(path, n_rows=None, n_cols=None):
    """Read a coordinate CSV with header ``row,col,value``.

    Grid dimensions default to one past the largest observed index and
    can be widened with explicit ``n_rows`` / ``n_cols``.
    """
    rows, cols, values = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != ["row", "col", "value"]:
            raise DataError(
                f"{path}: line 1: expected header 'row,col,value', got "
                f"{','.join(header)!r}"
            )
        for lineno, record in enumerate(reader, start=2):
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            if len(record) != 3:
                raise DataError(
                    f"{path}: line {lineno}: expected 3 fields, got {len(record)}"
                )
            try:
                r = _parse_index(record[0])
                c = _parse_index(record[1])
                v = float(record[2])
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
            rows.append(r)
            cols.append(c)
            values.append(v)
    if not rows:
        raise DataError(f"{path}: no observations")
    inferred_rows = max(rows) + 1
    inferred_cols = max(cols) + 1
    return ObservationSet(
        n_rows if n_rows is not None else inferred_rows,
        n_cols if n_cols is not None else inferred_cols,
        rows,
        cols,
        values,
    )


def _parse_index(token):
    token = token.strip()
    try:
        value = int(token)
    except ValueError:
        raise ValueError(f"invalid integer index {token!r}") from None
    if value < 0:
        raise ValueError(f"negative index {value}")
    return value


def write_coordinate_csv(s, path):
    """Write a coordinate CSV; values use shortest round-trip format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "col", "value"])
        for r, c, v in zip(s.rows, s.cols, s.values):
            writer.writerow([int(r), int(c), repr(float(v))])


def load_dense_csv(path, na_token="NA"):
    """Read a dense rectangular CSV; ``na_token`` cells are unobserved."""
    data = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, record in enumerate(reader, start=1):
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise DataError(
                    f"{path}: line {lineno}: expected {width} fields, "
                    f"got {len(record)}"
                )
            row = []
            for colno, token in enumerate(record):
                token = token.strip()
                if token == na_token:
                    row.append(np.nan)
                    continue
                try:
                    row.append(float(token))
                except ValueError:
                    raise DataError(
                        f"{path}: line {lineno}: field {colno + 1}: "
                        f"invalid value {token!r}"
                    ) from None
            data.append(row)
    if not data:
        raise DataError(f"{path}: empty file")
    matrix = np.asarray(data, dtype=float)
    if np.all(np.isnan(matrix)):
        raise DataError(f"{path}: no observations")
    return ObservationSet.from_dense(matrix)


def _check_rect(rect, n_rows, n_cols, what):
    r0, c0, r1, c1 = (int(v) for v in rect)
    if not (0 <= r0 <= r1 <= n_rows and 0 <= c0 <= c1 <= n_cols):
        raise DataError(
            f"{what} rectangle {rect!r} does not fit a "
            f"{n_rows} x {n_cols} grid (bounds are 0-based, end-exclusive)"
        )
    return r0, c0, r1, c1


def window_minus_window(full, outer, inner=None, *, allow_empty=False):
    """Keep cells inside ``outer`` but outside ``inner``.

    Rectangles are ``(row_start, col_start, row_end, col_end)`` with
    0-based, end-exclusive bounds. ``inner`` may be ``None`` or have zero
    area; otherwise it must lie inside ``outer``. The grid dimensions of
    the result are unchanged, so indices keep their original meaning.
    """
    r0, c0, r1, c1 = _check_rect(outer, full.n_rows, full.n_cols, "outer")
    keep = (
        (full.rows >= r0) & (full.rows < r1) & (full.cols >= c0) & (full.cols < c1)
    )
    if inner is not None:
        ir0, ic0, ir1, ic1 = _check_rect(inner, full.n_rows, full.n_cols, "inner")
        if ir0 < ir1 and ic0 < ic1:
            if not (r0 <= ir0 and ir1 <= r1 and c0 <= ic0 and ic1 <= c1):
                raise DataError("inner rectangle must lie inside the outer one")
            inside_inner = (
                (full.rows >= ir0)
                & (full.rows < ir1)
                & (full.cols >= ic0)
                & (full.cols < ic1)
            )
            keep &= ~inside_inner
    if not np.any(keep) and not allow_empty:
        raise DataError(
            "window selection is empty; pass allow_empty=True to permit this"
        )
    return full.select(keep, allow_empty=allow_empty)


def apply_missing_mechanism(full, tau, seed):
    """Remove each entry independently with probability ``tau``.

    Draws one uniform per entry, in canonical entry order, from
    ``numpy.random.default_rng(seed)``, so results are reproducible.
    """
    tau = float(tau)
    if not 0.0 <= tau < 1.0:
        raise DataError(f"missing probability must lie in [0, 1), got {tau}")
    rng = np.random.default_rng(seed)
    keep = rng.random(full.n_obs) >= tau
    if not np.any(keep):
        raise DataError("missing mechanism removed every observation")
    return full.select(keep)


def random_split(s, q, seed, *, min_train_cover=1, max_tries=100):
    """Partition a set into train/test by per-cell Bernoulli(q) draws.

    Each entry goes to the test set independently with probability ``q``.
    The draw is repeated (continuing the same seeded generator) until the
    train set keeps at least ``min_train_cover`` observations in every row
    and column that had any, and both parts are nonempty; after
    ``max_tries`` failures a :class:`CoverageError` reports the deficient
    rows and columns of the last attempt.
    """
    q = float(q)
    if not 0.0 < q < 1.0:
        raise DataError(f"test fraction must lie in (0, 1), got {q}")
    parent_rows = s.cover_rows()
    parent_cols = s.cover_cols()
    need_rows = np.nonzero(parent_rows > 0)[0]
    need_cols = np.nonzero(parent_cols > 0)[0]
    short_rows = need_rows[parent_rows[need_rows] < min_train_cover]
    short_cols = need_cols[parent_cols[need_cols] < min_train_cover]
    if short_rows.size or short_cols.size:
        raise CoverageError(
            f"rows {short_rows.tolist()} / cols {short_cols.tolist()} have "
            f"fewer than {min_train_cover} observations before splitting",
            rows=short_rows.tolist(),
            cols=short_cols.tolist(),
        )

    rng = np.random.default_rng(seed)
    bad_rows = bad_cols = None
    for _ in range(max_tries):
        to_test = rng.random(s.n_obs) < q
        n_test = int(to_test.sum())
        if n_test == 0 or n_test == s.n_obs:
            bad_rows, bad_cols = [], []
            continue
        train_rows = np.bincount(s.rows[~to_test], minlength=s.n_rows)
        train_cols = np.bincount(s.cols[~to_test], minlength=s.n_cols)
        bad_rows = need_rows[train_rows[need_rows] < min_train_cover].tolist()
        bad_cols = need_cols[train_cols[need_cols] < min_train_cover].tolist()
        if not bad_rows and not bad_cols:
            return SplitSet(train=s.select(~to_test), test=s.select(to_test))
    raise CoverageError(
        f"could not draw a train/test split with {min_train_cover} "
        f"training observations per row and column in {max_tries} tries "
        f"(last attempt: rows {bad_rows}, cols {bad_cols})",
        rows=bad_rows or [],
        cols=bad_cols or [],
    )


def compact(s):
    """Drop empty rows and columns, remapping indices densely.

    Returns
    -------
    compacted : ObservationSet
    kept_rows : numpy.ndarray
        Original index of each retained row.
    kept_cols : numpy.ndarray
        Original index of each retained column.
    """
    kept_rows = np.nonzero(s.cover_rows() > 0)[0]
    kept_cols = np.nonzero(s.cover_cols() > 0)[0]
    row_map = np.full(s.n_rows, -1, dtype=np.int64)
    col_map = np.full(s.n_cols, -1, dtype=np.int64)
    row_map[kept_rows] = np.arange(kept_rows.size)
    col_map[kept_cols] = np.arange(kept_cols.size)
    out = ObservationSet(
        kept_rows.size,
        kept_cols.size,
        row_map[s.rows],
        col_map[s.cols],
        s.values,
    )
    return out, kept_rows, kept_cols
