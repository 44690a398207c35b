"""Plain comma-separated tables with a one-line header and 17-digit numbers."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def fmt(x):
    return "%.17g" % x


def write_table(path, header, rows):
    """``rows`` is a 2-D array-like of numbers (or a list of mixed rows)."""
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")


def field_rows(times, xi, values):
    """Tidy ``t, xi, value`` rows from values of shape ``(len(times), len(xi))``."""
    t = np.repeat(np.asarray(times, dtype=float), len(xi))
    x = np.tile(np.asarray(xi, dtype=float), len(times))
    return np.column_stack([t, x, np.asarray(values, dtype=float).ravel()])


def coefficient_rows(times, means, variances):
    """Tidy ``t, k, mean, variance`` rows per basis coefficient."""
    m, dim = means.shape
    t = np.repeat(np.asarray(times, dtype=float), dim)
    k = np.tile(np.arange(dim, dtype=float), m)
    return np.column_stack([t, k, means.ravel(), variances.ravel()])


def read_table(path):
    """Return ``(header, data)``; ``data`` is a float array with one row per line."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from None
    if not lines:
        raise ConfigError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise ConfigError(f"{path}: expected {len(header)} fields, got {len(parts)}", lineno)
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ConfigError(f"{path}: non-numeric field", lineno) from None
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def read_observations(path, n_steps, dt, d):
    """Observation increments ``(n_steps, d)`` from a ``t,dY_1..dY_d`` table."""
    header, data = read_table(path)
    expected = ["t"] + [f"dY_{k}" for k in range(1, d + 1)]
    if header != expected:
        raise ConfigError(f"{path}: header must be {','.join(expected)}", 1)
    if data.shape[0] == 0:
        raise ConfigError(f"{path}: no observation rows")
    if data.shape[0] != n_steps:
        raise ConfigError(f"{path}: expected {n_steps} rows, found {data.shape[0]}")
    for i, row in enumerate(data):
        if not np.all(np.isfinite(row)):
            raise ConfigError(f"{path}: non-finite value", i + 2)
        if abs(row[0] - i * dt) > 1e-9 * max(1.0, i * dt):
            raise ConfigError(f"{path}: time {row[0]!r} off the grid (expected {i * dt!r})", i + 2)
    return data[:, 1:]
