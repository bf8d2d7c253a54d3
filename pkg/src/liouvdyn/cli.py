"""Batch command-line front end with deterministic CSV/JSON emission.

Five subcommands cover the desk-scale experiments: ``sweep`` scores the
approximate propagators over a grid of protocol durations, ``diagnose``
samples the validity parameters along one protocol, ``open`` integrates
the thermal-bath master equation, ``geo`` evaluates geometric phases on
a parameter circuit, and ``single`` scores one protocol end to end.
Outputs are a data file plus a manifest recording the resolved config
hash, tool version, column provenance, and per-point error flags; a
fixed config yields byte-identical files on every run.
"""

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import EXPERIMENTS, RunConfig, load_config_file, resolve_config
from .diagnostics import (
    adiabatic_parameter,
    fidelity_sweep,
    ho_inertial_parameter_closed,
    inertial_parameter_at,
    log_time_grid,
)
from .errors import ConfigInvalid, LiouvdynError, SingularDenominator
from .geometric import (
    ParameterCircuit,
    geometric_phase_line,
    geometric_phase_surface,
    ho_family,
    tls_family,
    two_spin_local_family,
    two_spin_nonlocal_family,
)
from .models import BlochState, HOModel, HOProtocol, TLSModel, TLSProtocol
from .open_quantum import BathSpec, mesolve, trajectory_rows

_SWEEP_COLUMNS = (
    "t_f",
    "F_inertial",
    "F_adiabatic",
    "neglog1mF_inertial",
    "mu_max",
    "upsilon_max",
)
_SWEEP_SOURCES = {
    "t_f": "diagnostics.log_time_grid",
    "F_inertial": "diagnostics.fidelity_sweep (engine.propagate_inertial vs propagate_exact)",
    "F_adiabatic": "diagnostics.fidelity_sweep (engine.propagate_adiabatic vs propagate_exact)",
    "neglog1mF_inertial": "diagnostics.fidelity_sweep",
    "mu_max": "diagnostics.max_parameters_along (adiabatic_parameter)",
    "upsilon_max": "diagnostics.max_parameters_along (inertial parameter)",
}

_GEO_FAMILIES = {
    "ho": ho_family,
    "tls": tls_family,
    "two-spin-local": two_spin_local_family,
    "two-spin-nonlocal": two_spin_nonlocal_family,
}


def _ramp_model(cfg: RunConfig, t_f: float):
    proto = cfg.protocol
    if cfg.model["kind"] == "ho":
        p = HOProtocol.solve_boundary(
            proto["omega_start"], proto["omega_target"], t_f, proto["acceleration"]
        )
        return HOModel(
            protocol=p,
            mass=cfg.model["mass"],
            q0=cfg.model["q0"],
            p0=cfg.model["p0"],
        )
    p = TLSProtocol.solve_boundary(
        proto["omega_start"],
        proto["omega_target"],
        proto["epsilon"],
        t_f,
        proto["acceleration"],
    )
    return TLSModel(protocol=p, initial_values=tuple(cfg.model["initial_values"]))


def _sweep_outputs(cfg: RunConfig, grid):
    num = cfg.numerics
    model = _ramp_model(cfg, float(grid[0]))
    result = fidelity_sweep(
        model,
        grid,
        omega_target=cfg.protocol["omega_target"],
        samples=num["samples"],
        threads=num["threads"],
        rtol=num["rtol"],
        atol=num["atol"],
        phase_tol=num["phase_tol"],
    )
    rows = [
        (tf, fi, fa, nl, mu, ups)
        for tf, fi, fa, mu, ups, nl in result.rows()
    ]
    return _SWEEP_COLUMNS, rows, dict(_SWEEP_SOURCES), list(result.errors)


def _run_sweep(cfg: RunConfig):
    num = cfg.numerics
    grid = log_time_grid(num["t_min"], num["t_max"], num["points"])
    return _sweep_outputs(cfg, grid)


def _run_single(cfg: RunConfig):
    columns, rows, sources, errors = _sweep_outputs(
        cfg, np.array([cfg.protocol["t_f"]])
    )
    sources["t_f"] = "config.protocol.t_f"
    return columns, rows, sources, errors


def _run_diagnose(cfg: RunConfig):
    model = _ramp_model(cfg, cfg.protocol["t_f"])
    fact = model.factorization()
    is_ho = isinstance(model, HOModel)
    ts = np.linspace(0.0, cfg.protocol["t_f"], cfg.numerics["samples"])
    columns = ("t", "mu", "upsilon") + (("upsilon_closed",) if is_ho else ())
    sources = {
        "t": "numpy.linspace over [0, protocol.t_f]",
        "mu": "diagnostics.adiabatic_parameter",
        "upsilon": "diagnostics.inertial_parameter_at",
    }
    if is_ho:
        sources["upsilon_closed"] = "diagnostics.ho_inertial_parameter_closed"
    rows, errors = [], []
    for t in ts:
        t = float(t)
        error = None
        try:
            row = [t, adiabatic_parameter(model, t), inertial_parameter_at(fact, t)]
            if is_ho:
                try:
                    row.append(ho_inertial_parameter_closed(t, model.protocol))
                except SingularDenominator as exc:
                    row.append(math.nan)
                    error = f"SingularDenominator: {exc}"
        except (LiouvdynError, ValueError, ArithmeticError) as exc:
            row = [t] + [math.nan] * (len(columns) - 1)
            error = f"{type(exc).__name__}: {exc}"
        rows.append(tuple(row))
        errors.append(error)
    return columns, rows, sources, errors


def _run_open(cfg: RunConfig):
    proto = cfg.protocol
    num = cfg.numerics
    model = TLSModel(
        protocol=TLSProtocol(
            epsilon=proto["epsilon"],
            omega0=proto["omega0"],
            chi0=proto["chi0"],
            abar=proto["abar"],
        )
    )
    bath = BathSpec(
        temperature=cfg.model["bath"]["temperature"],
        coupling=cfg.model["bath"]["coupling"],
        cutoff=cfg.model["bath"]["cutoff"],
    )
    ts = np.linspace(0.0, num["t_final"], num["points"])
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", UserWarning)
        states = mesolve(
            model,
            bath,
            BlochState(np.array(cfg.model["initial_bloch"], dtype=float)),
            ts,
            lamb_shift_enabled=num["lamb_shift"],
            picture=num["picture"],
            rtol=num["rtol"],
            atol=num["atol"],
        )
    notes.extend(str(w.message) for w in caught)
    rows = trajectory_rows(model, ts, states)
    columns = (
        "t",
        "bloch_x",
        "bloch_y",
        "bloch_z",
        "pop_ground",
        "pop_excited",
        "trace_dev",
        "min_eig",
    )
    sources = {name: "open_quantum.mesolve + open_quantum.trajectory_rows"
               for name in columns}
    sources["t"] = "numpy.linspace over [0, numerics.t_final]"
    return columns, rows, sources, [None] * len(rows), notes


def _run_geo(cfg: RunConfig):
    family = _GEO_FAMILIES[cfg.model["kind"]]()
    circuit = ParameterCircuit.from_waypoints(
        cfg.protocol["waypoints"],
        closed=cfg.protocol["closed"],
        samples=cfg.protocol["samples"],
    )
    n_modes = family.matrix(circuit.path(0.0)).shape[0]
    modes = cfg.numerics["modes"]
    if modes == "all":
        modes = list(range(n_modes))
    else:
        bad = [m for m in modes if m >= n_modes]
        if bad:
            raise ConfigInvalid(
                f"numerics.modes: index {bad[0]} outside 0..{n_modes - 1}"
            )
    method = cfg.numerics["method"]
    columns = ("mode",)
    if method in ("line", "both"):
        columns += ("phase_line",)
    if method in ("surface", "both"):
        columns += ("phase_surface",)
    sources = {
        "mode": "config.numerics.modes",
        "phase_line": "geometric.geometric_phase_line",
        "phase_surface": "geometric.geometric_phase_surface",
    }
    sources = {k: v for k, v in sources.items() if k in columns}
    rows, errors = [], []
    for mode in modes:
        row = [mode]
        error = None
        for fn, name in (
            (geometric_phase_line, "line"),
            (geometric_phase_surface, "surface"),
        ):
            if method not in (name, "both"):
                continue
            try:
                row.append(fn(family, circuit, mode))
            except (LiouvdynError, ValueError, ArithmeticError) as exc:
                row.append(math.nan)
                error = f"{type(exc).__name__}: {exc}"
        rows.append(tuple(row))
        errors.append(error)
    return columns, rows, sources, errors


_RUNNERS = {
    "sweep": _run_sweep,
    "diagnose": _run_diagnose,
    "open": _run_open,
    "geo": _run_geo,
    "single": _run_single,
}


def _format_cell(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % float(x)


def _json_cell(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return int(x)
    x = float(x)
    return x if math.isfinite(x) else None


def write_outputs(cfg: RunConfig, columns, rows, sources, errors, notes=()):
    """Write the data file and its manifest; returns their paths."""
    out_dir = Path(cfg.output["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = cfg.output["stem"]
    fmt = cfg.output["format"]
    data_path = out_dir / f"{stem}.{fmt}"
    if fmt == "csv":
        lines = [",".join(columns)]
        lines.extend(",".join(_format_cell(x) for x in row) for row in rows)
        data_path.write_text("\n".join(lines) + "\n")
    else:
        payload = {
            "columns": list(columns),
            "rows": [[_json_cell(x) for x in row] for row in rows],
        }
        data_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    failed = sum(1 for e in errors if e is not None)
    status = "ok" if failed == 0 else ("failed" if failed == len(errors) else "partial")
    manifest = {
        "config": cfg.to_dict(),
        "config_sha256": cfg.sha256(),
        "tool_version": __version__,
        "data_file": data_path.name,
        "columns": sources,
        "point_errors": list(errors),
        "warnings": list(notes),
        "status": status,
    }
    manifest_path = out_dir / f"{stem}_manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return data_path, manifest_path, status


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liouvdyn",
        description="Deterministic batch experiments on driven operator-algebra models.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name, blurb in (
        ("sweep", "score approximate propagators over a duration grid"),
        ("diagnose", "sample validity parameters along one protocol"),
        ("open", "integrate the thermal-bath master equation"),
        ("geo", "geometric phases of a parameter circuit"),
        ("single", "score one protocol end to end"),
    ):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", help="JSON config file; defaults fill gaps")
        p.add_argument("--model", help="model kind selecting the embedded defaults")
        p.add_argument("--out", help="output directory (default: current)")
        p.add_argument("--format", choices=("csv", "json"), help="data file format")
        p.add_argument("--threads", type=int, help="concurrent sweep points")
        p.add_argument("--tol", type=float, help="relative tolerance override")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        file_config = load_config_file(args.config) if args.config else None
        cfg = resolve_config(
            args.experiment,
            file_config,
            model_kind=args.model,
            out_dir=args.out,
            out_format=args.format,
            threads=args.threads,
            rtol=args.tol,
        )
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        outputs = _RUNNERS[cfg.experiment](cfg)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (LiouvdynError, ValueError, ArithmeticError) as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4

    columns, rows, sources, errors = outputs[:4]
    notes = outputs[4] if len(outputs) > 4 else ()
    data_path, manifest_path, status = write_outputs(
        cfg, columns, rows, sources, errors, notes
    )
    print(f"wrote {data_path} and {manifest_path} ({status})")
    if status == "failed":
        return 4
    return 3 if status == "partial" else 0


if __name__ == "__main__":
    sys.exit(main())
