"""Empirical contraction thresholds for the Picard map.

For each (d, p) the amplitude multiplier A0 of a unit Gaussian final state at
which the iteration stops contracting is found by bisection; the free-flow
critical norm at A0 is the recorded eta0.  The shipped table is regenerated
with ``python -m randwave.calibration``.
"""
import json
import math
from pathlib import Path
import sys
import warnings

import numpy as np

from .errors import BlowUpError, ConfigError, EtaTooLargeError, HorizonWarning
from .grid import Grid, sample_profile
from .waveop import SolverConfig, _free_eta, calibrate_eta0, picard_solve

TABLE_NAME = "eta0_calibration.json"
CASES = (
    {"d": 1, "p": 3.0, "N": 256, "L": 20.0},
    {"d": 2, "p": 1.5, "N": 64, "L": 10.0},
    {"d": 3, "p": 1.2, "N": 32, "L": 8.0},
)
SOLVER = {"T": 1.0, "T_max": 100.0, "M": 32, "max_iter": 60}
BISECTION = {"lo": 0.0, "hi": 32.0, "iters": 12}
# deterministic experiment: the seed is recorded for provenance only
SEED = 0


def _case_inputs(case):
    phi = sample_profile(Grid(case["d"], case["N"], case["L"]), "gaussian")
    cfg = SolverConfig(d=case["d"], p=case["p"], **SOLVER)
    return phi, cfg


def build_table():
    rows = []
    for case in CASES:
        phi, cfg = _case_inputs(case)
        a0, eta0 = calibrate_eta0(phi, cfg, **BISECTION)
        rows.append({**case, "profile": "gaussian", "A0": a0, "eta0": eta0})
    return {"solver": SOLVER, "bisection": BISECTION, "seed": SEED, "cases": rows}


def table_path():
    return Path(__file__).parent / "data" / TABLE_NAME


def load_table(path=None):
    src = table_path() if path is None else Path(path)
    try:
        return json.loads(src.read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read calibration table {src}: {exc}") from exc


def _converges(phi, cfg):
    with warnings.catch_warnings(), np.errstate(over="ignore", invalid="ignore"):
        warnings.simplefilter("ignore", HorizonWarning)
        try:
            _, rep = picard_solve(phi, cfg)
            return rep.converged
        except (EtaTooLargeError, BlowUpError):
            return False


def check_table(table, eta_rtol=0.01):
    """Re-run every row: 0.5 A0 must converge, 2 A0 must fail, eta at A0 must match the table."""
    out = []
    for row in table["cases"]:
        try:
            case = {k: row[k] for k in ("d", "p", "N", "L")}
            phi, cfg = _case_inputs(case)
            a0, eta0 = float(row["A0"]), float(row["eta0"])
            half = _converges(phi * (0.5 * a0), cfg)
            double = _converges(phi * (2 * a0), cfg)
            eta, _ = _free_eta(phi * a0, cfg, cfg.time_grid, cfg.resolve_t_min(phi.grid))
            eta_ok = math.isclose(eta, eta0, rel_tol=eta_rtol)
        except (KeyError, TypeError, ValueError) as exc:
            out.append({"d": row.get("d"), "passed": False, "error": f"malformed row: {exc}"})
            continue
        out.append({"d": case["d"], "p": case["p"], "A0": a0, "eta0": eta0, "eta_remeasured": eta,
                    "half_converges": half, "double_fails": not double, "eta_matches": eta_ok,
                    "passed": bool(half and not double and eta_ok)})
    return out


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    table = build_table()
    text = json.dumps(table, indent=2, sort_keys=True) + "\n"
    if argv:
        Path(argv[0]).write_text(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    main()
