"""Plain-text CSV and key-value writers and the sample CSV reader."""
from __future__ import annotations

import math

import numpy as np

from .audit import AuditReport
from .flow import Trajectory


class CSVFormatError(ValueError):
    """Malformed sample CSV; ``line`` is 1-based."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def fmt(value, precision: int = 15) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v + 0.0, f".{precision}g")
    return str(value)


def _write_rows(path, header, rows, precision):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v, precision) for v in row) + "\n")


def trajectory_rows(traj: Trajectory, ed: AuditReport):
    """Rows ``t, u..., speed, slope, chosen_F, energy, power, ed_residual``.

    ``speed`` on row ``k`` is the speed of the step arriving at node ``k``
    (0 on the first row), matching the pairing with ``chosen_F``.
    """
    n = traj.states.shape[1]
    header = ["t"] + [f"u_{i}" for i in range(n)] + \
        ["speed", "slope", "chosen_F", "energy", "power", "ed_residual"]
    speeds = np.concatenate([[0.0], traj.speeds])
    rows = []
    for k, t in enumerate(traj.times):
        rows.append([float(t), *map(float, traj.states[k]), float(speeds[k]), float(traj.slopes[k]),
                     float(traj.chosen_F[k]), float(traj.energies[k]), float(traj.powers[k]),
                     float(ed.residuals[k])])
    return header, rows


def write_trajectory_csv(path, traj: Trajectory, ed: AuditReport, precision: int = 15):
    header, rows = trajectory_rows(traj, ed)
    _write_rows(path, header, rows, precision)


def write_samples_csv(path, times, states, precision: int = 15):
    states = np.asarray(states).reshape(len(times), -1)
    header = ["t"] + [f"u_{i}" for i in range(states.shape[1])]
    _write_rows(path, header, ([float(t), *map(float, u)] for t, u in zip(times, states)), precision)


def write_jumps_csv(path, jumps: list[dict], dimension: int, precision: int = 15):
    header = ["t"]
    for tag in ("u_minus", "u_at", "u_plus"):
        header += [f"{tag}_{i}" for i in range(dimension)]
    header += ["tricost", "energy_drop"]
    rows = []
    for j in jumps:
        rows.append([j["t"], *map(float, j["u_minus"]), *map(float, j["u_at"]),
                     *map(float, j["u_plus"]), j["tricost"], j["energy_drop"]])
    _write_rows(path, header, rows, precision)


def write_keyvalue(path, pairs, precision: int = 15):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in pairs:
            fh.write(f"{key} = {fmt(value, precision)}\n")


def keyvalue_text(pairs, precision: int = 15) -> str:
    return "".join(f"{k} = {fmt(v, precision)}\n" for k, v in pairs)


def read_samples_csv(path, dimension: int | None = None):
    """Read ``t, u_0, ...`` columns (extra trailing columns are ignored).

    Sample times must be nondecreasing; repeated times encode exact jumps.
    Raises :class:`CSVFormatError` with the offending line number.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise CSVFormatError(f"cannot read {path}: {exc.strerror}", 0) from None
    if not lines:
        raise CSVFormatError("empty file", 1)
    header = [h.strip() for h in lines[0].split(",")]
    if not header or header[0] != "t":
        raise CSVFormatError("header must start with column 't'", 1)
    ucols = [i for i, h in enumerate(header) if h.startswith("u_") and h[2:].isdigit()]
    if not ucols or ucols != list(range(1, len(ucols) + 1)):
        raise CSVFormatError("expected state columns u_0, u_1, ... after 't'", 1)
    if dimension is not None and len(ucols) != dimension:
        raise CSVFormatError(f"expected {dimension} state columns, found {len(ucols)}", 1)
    times, states = [], []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise CSVFormatError(f"expected {len(header)} fields, found {len(cells)}", ln)
        try:
            vals = [float(cells[i]) for i in range(len(ucols) + 1)]
        except ValueError:
            raise CSVFormatError("non-numeric value", ln) from None
        if not all(math.isfinite(v) for v in vals):
            raise CSVFormatError("non-finite value", ln)
        if times and vals[0] < times[-1]:
            raise CSVFormatError("sample times must be nondecreasing", ln)
        times.append(vals[0])
        states.append(vals[1:])
    if len(times) < 2:
        raise CSVFormatError("need at least two samples", len(lines))
    return np.array(times), np.array(states)
