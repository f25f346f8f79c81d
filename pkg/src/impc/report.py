"""CSV serialization of simulation logs and the gnuplot helper script."""

import csv

import numpy as np

from .errors import ImpcError

__all__ = ["csv_header", "log_rows", "write_csv", "read_csv", "validate_csv", "gnuplot_script"]

_TAIL = ["norm_z", "norm_mu", "norm_lambda", "S_flow", "S_plant", "V_lyap",
         "w_flow", "w_plant", "q_bound", "eq_feas"]


def csv_header(n, m):
    return (["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)] + _TAIL)


def _fmt(v):
    return format(float(v), ".12g")


def log_rows(log):
    st = log.storage
    cols = [log.times[:, None], log.x, log.u, log.norm_z[:, None], log.norm_mu[:, None],
            log.norm_lam[:, None]]
    cols += [np.asarray(st[k])[:, None] for k in ("S_flow", "S_plant", "V_lyap", "w_flow",
                                                   "w_plant", "q_bound")]
    cols.append(log.eq_feas[:, None])
    return np.hstack(cols)


def write_csv(log, path):
    """Write a SimLog with 12 significant digits and UNIX line endings, then validate it."""
    n, m = log.x.shape[1], log.u.shape[1]
    header = csv_header(n, m)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in log_rows(log):
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    validate_csv(path, n, m)
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    return header, data


class CsvValidationError(ImpcError):
    pass


def validate_csv(path, n, m):
    """Re-read a written log and check header, monotone time and finite entries."""
    header, data = read_csv(path)
    if header != csv_header(n, m):
        raise CsvValidationError(f"{path}: unexpected header")
    if data.ndim != 2 or data.shape[1] != len(header):
        raise CsvValidationError(f"{path}: ragged rows")
    if not np.all(np.isfinite(data)):
        raise CsvValidationError(f"{path}: non-finite entries")
    if np.any(np.diff(data[:, 0]) <= 0):
        raise CsvValidationError(f"{path}: time column is not strictly increasing")
    return data


def gnuplot_script(csv_files, n):
    """A gnuplot script overlaying the state trajectories of several CSV logs."""
    lines = ["set datafile separator ','", "set key autotitle columnhead",
             "set xlabel 't [s]'", f"set multiplot layout {n},1"]
    for i in range(n):
        parts = [f"'{f}' using 1:{i + 2} with lines title '{f} x{i + 1}'" for f in csv_files]
        lines.append(f"set ylabel 'x{i + 1}'")
        lines.append("plot " + ", \\\n     ".join(parts))
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"
