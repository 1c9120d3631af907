"""Command-line driver: config files, builtin systems, task orchestration.

A run is described by a JSON config (all keys optional except where noted):

    {
      "task": "scf" | "polarizability" | "chain-series" | "h4-sweep" | "compare",
      "system": "h-atom" | "h2" | "na5" | "h-chain(6)" | "h4-sweep(4.0)"
                | {inline system, see parse_system},
      "scheme": "LDA" or ["LDA", "EXACT_SIC", ...],
      "scf": {SCFConfig overrides},
      "output": {"path": "out.csv", "format": "csv" | "json"},
      "field": 5e-4, "axis": 2, "check_linearity": false,
      "lengths": [4, 6, 8], "distances": [2.0, 4.0, 8.0],
      "mode": "full-3d" | "soft-coulomb-1d", "spacing": 0.7
    }

Unknown keys are rejected with their paths. Every output file embeds a
provenance header (config echo, code version, grid, tolerances) such that
parsing the echoed config reproduces the run exactly. Exit status is 0 only
when every sub-run converged and all outputs were written.

CSV column order for polarizability tasks is fixed:
system, scheme, axis, E, mu_plus, mu_minus, alpha, linearity_pct, converged.

The only environment variable honored is the BLAS/FFT thread count
(OMP_NUM_THREADS); no other ambient state affects results.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import re
import sys
from dataclasses import dataclass

from . import __version__
from .external import ConfigurationError, Ion, IonicConfiguration, PseudopotentialSpec
from .grid import MODE_1D, MODE_3D, GridSpec, grid_for_box
from .polarizability import (CSV_FIELDS, DEFAULT_FIELD, PolarizabilityRequest,
                             chain_series, h4_distance_sweep, polarizability)
from .scf import SCFConfig, solve_ground_state
from .schemes import SchemeId
from .systems import (SystemSpec, h2, h4_pair, h_atom, h_chain, na5)

TASKS = ("scf", "polarizability", "chain-series", "h4-sweep", "compare")

_TOP_KEYS = {"task", "system", "scheme", "schemes", "scf", "output", "field",
             "axis", "check_linearity", "lengths", "distances", "mode",
             "spacing"}
_OUTPUT_KEYS = {"path", "format"}
_SCF_KEYS = {f.name for f in dataclasses.fields(SCFConfig)}
_SYSTEM_KEYS = {"ions", "n_up", "n_dn", "grid", "name"}
_GRID_KEYS = {"box", "dims", "spacing", "mode", "soft_core", "origin"}
_ION_KEYS = {"position", "charge", "sigma"}

_BUILTIN_RE = re.compile(r"^(h-chain|h4-sweep)\(([-0-9.eE+]+)\)$")


class ConfigError(ValueError):
    """Raised for malformed, unknown-key, or invariant-violating configs."""


def _reject_unknown(mapping: dict, allowed: set, path: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) at {path}: {', '.join(unknown)}")


def parse_system(value, mode: str, spacing: float) -> SystemSpec:
    """Resolve a builtin name or an inline system description.

    Builtins: h-atom, h2, na5, h-chain(n), h4-sweep(d). Inline systems are
    dicts with ions (list of {position, charge, sigma}), n_up, n_dn and a
    grid ({box | dims, spacing, mode, soft_core, origin}).
    """
    if isinstance(value, str):
        if value == "h-atom":
            return h_atom(spacing=spacing, mode=mode)
        if value == "h2":
            return h2(spacing=spacing, mode=mode)
        if value == "na5":
            if mode == MODE_1D:
                raise ConfigError("system: na5 is only defined on the 3-d grid")
            return na5(spacing=spacing)
        m = _BUILTIN_RE.match(value)
        if m and m.group(1) == "h-chain":
            return h_chain(int(float(m.group(2))), spacing=spacing, mode=mode)
        if m and m.group(1) == "h4-sweep":
            return h4_pair(float(m.group(2)), spacing=spacing, mode=mode)
        raise ConfigError(f"system: unknown builtin {value!r}")
    if not isinstance(value, dict):
        raise ConfigError("system: expected a builtin name or an object")
    _reject_unknown(value, _SYSTEM_KEYS, "system")
    for key in ("ions", "n_up", "n_dn", "grid"):
        if key not in value:
            raise ConfigError(f"system.{key}: required for inline systems")
    ions = []
    for i, ion in enumerate(value["ions"]):
        _reject_unknown(ion, _ION_KEYS, f"system.ions[{i}]")
        pseudo = PseudopotentialSpec(sigma=float(ion.get("sigma", 0.4)))
        ions.append(Ion(tuple(float(x) for x in ion["position"]),
                        float(ion["charge"]), pseudo))
    g = dict(value["grid"])
    _reject_unknown(g, _GRID_KEYS, "system.grid")
    gmode = g.get("mode", mode)
    h = float(g.get("spacing", spacing))
    if "dims" in g:
        grid = GridSpec(tuple(int(n) for n in g["dims"]), h,
                        mode=gmode, soft_core=float(g.get("soft_core", 1.0)))
    elif "box" in g:
        grid = grid_for_box(tuple(float(b) for b in g["box"]), h, mode=gmode,
                            soft_core=float(g.get("soft_core", 1.0)))
    else:
        raise ConfigError("system.grid: needs either box or dims")
    try:
        return SystemSpec(IonicConfiguration(tuple(ions)),
                          int(value["n_up"]), int(value["n_dn"]), grid,
                          name=value.get("name", "inline"))
    except ConfigurationError as exc:
        raise ConfigError(f"system: {exc}") from exc


def _parse_schemes(value) -> list:
    names = [value] if isinstance(value, str) else list(value)
    out = []
    for name in names:
        try:
            out.append(SchemeId(name.upper().replace("-", "_")))
        except ValueError:
            known = ", ".join(s.value for s in SchemeId)
            raise ConfigError(f"scheme: {name!r} is not one of {known}") from None
    return out


@dataclass
class RunConfig:
    """A fully resolved run: task, system, schemes, solver and output."""

    task: str
    system: SystemSpec
    schemes: list
    scf: SCFConfig
    out_path: str | None
    out_format: str
    field: float
    axis: int
    check_linearity: bool
    lengths: list
    distances: list
    mode: str
    spacing: float
    echo: dict  # normalized config: parsing it reproduces this RunConfig


def parse_config(data: dict) -> RunConfig:
    """Validate a config mapping and resolve every default.

    Raises ConfigError listing unknown keys, or naming the violated field
    for invariant failures (e.g. charge imbalance).
    """
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    _reject_unknown(data, _TOP_KEYS, "top level")
    task = data.get("task", "scf")
    if task not in TASKS:
        raise ConfigError(f"task: {task!r} is not one of {', '.join(TASKS)}")
    if "scheme" in data and "schemes" in data:
        raise ConfigError("give either scheme or schemes, not both")
    mode = data.get("mode", MODE_3D)
    if mode not in (MODE_1D, MODE_3D):
        raise ConfigError(f"mode: {mode!r} is not {MODE_3D!r} or {MODE_1D!r}")
    spacing = float(data.get("spacing", 0.7))
    schemes = _parse_schemes(data.get("scheme", data.get("schemes", "LDA")))
    if task == "compare":
        schemes = list(SchemeId)
    scf_over = dict(data.get("scf", {}))
    _reject_unknown(scf_over, _SCF_KEYS, "scf")
    try:
        scf = SCFConfig(**scf_over)
    except ValueError as exc:
        raise ConfigError(f"scf: {exc}") from exc
    output = dict(data.get("output", {}))
    _reject_unknown(output, _OUTPUT_KEYS, "output")
    out_format = output.get("format", "csv")
    if out_format not in ("csv", "json"):
        raise ConfigError(f"output.format: {out_format!r} is not csv or json")
    system_raw = data.get("system", "h-atom")
    system = parse_system(system_raw, mode, spacing)
    field = float(data.get("field", DEFAULT_FIELD))
    axis = int(data.get("axis", 2))
    lengths = [int(n) for n in data.get("lengths", [4, 6, 8])]
    distances = [float(d) for d in data.get("distances",
                                            [2.0, 3.0, 4.0, 6.0, 8.0, 10.0])]
    echo = {
        "task": task, "system": system_raw,
        "schemes": [s.value for s in schemes],
        "scf": dataclasses.asdict(scf),
        "output": {"path": output.get("path"), "format": out_format},
        "field": field, "axis": axis,
        "check_linearity": bool(data.get("check_linearity", False)),
        "lengths": lengths, "distances": distances,
        "mode": mode, "spacing": spacing,
    }
    return RunConfig(task=task, system=system, schemes=schemes, scf=scf,
                     out_path=output.get("path"), out_format=out_format,
                     field=field, axis=axis,
                     check_linearity=echo["check_linearity"],
                     lengths=lengths, distances=distances,
                     mode=mode, spacing=spacing, echo=echo)


def _report_dict(rep) -> dict:
    d = dataclasses.asdict(rep)
    d.pop("trace", None)
    d["eigenvalues"] = [[float(e) for e in block] for block in d["eigenvalues"]]
    d["parts"] = {k: float(v) for k, v in d["parts"].items()}
    return d


def _provenance(cfg: RunConfig) -> dict:
    return {
        "version": __version__,
        "config": cfg.echo,
        "grid": {"dims": list(cfg.system.grid.dims),
                 "spacing": cfg.system.grid.spacing,
                 "mode": cfg.system.grid.mode},
        "tolerances": {"variance": cfg.scf.tol_variance,
                       "energy": cfg.scf.tol_energy},
    }


def _run_scf(cfg: RunConfig):
    rows, ok = [], True
    for scheme in cfg.schemes:
        _, _, rep = solve_ground_state(cfg.system, scheme, cfg.scf)
        rows.append(_report_dict(rep))
        ok = ok and rep.converged
    return rows, ok


def _run_polarizability(cfg: RunConfig):
    rows, ok = [], True
    for scheme in cfg.schemes:
        req = PolarizabilityRequest(cfg.system, scheme, axis=cfg.axis,
                                    field=cfg.field,
                                    check_linearity=cfg.check_linearity,
                                    scf=cfg.scf)
        rep = polarizability(req)
        rows.append(rep)
        ok = ok and rep.converged
    return rows, ok


def _run_series(cfg: RunConfig):
    rows, ok = [], True
    for scheme in cfg.schemes:
        if cfg.task == "chain-series":
            reps = chain_series(cfg.lengths, scheme, spacing=cfg.spacing,
                                mode=cfg.mode, field_strength=cfg.field,
                                scf=cfg.scf)
        else:
            reps = h4_distance_sweep(cfg.distances, scheme,
                                     spacing=cfg.spacing, mode=cfg.mode,
                                     field_strength=cfg.field, scf=cfg.scf)
        rows.extend(reps)
        ok = ok and all(r.converged for r in reps)
    return rows, ok


def _emit_csv(cfg: RunConfig, rows, energies=None) -> str:
    buf = io.StringIO()
    prov = _provenance(cfg)
    for key in ("version", "config", "grid", "tolerances"):
        buf.write(f"# {key}: {json.dumps(prov[key])}\n")
    if cfg.task == "scf":
        fields = ("scheme", "energy", "converged", "iterations",
                  "max_variance", "symmetry_residual")
        writer = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    else:
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for rep in rows:
            writer.writerow(rep.as_row())
        if energies is not None:
            buf.write("# energy-table: scheme,energy_ha,converged\n")
            for scheme, (e, conv) in energies.items():
                buf.write(f"# energy-table: {scheme},{e!r},{conv}\n")
    return buf.getvalue()


def _emit_json(cfg: RunConfig, rows, energies=None) -> str:
    payload = {"provenance": _provenance(cfg)}
    if cfg.task == "scf":
        payload["reports"] = rows
    else:
        payload["results"] = [rep.as_dict() for rep in rows]
        if energies is not None:
            payload["energy_table"] = {
                s: {"energy": e, "converged": conv}
                for s, (e, conv) in energies.items()}
    return json.dumps(payload, indent=2, default=float) + "\n"


def run(cfg: RunConfig, stream=None) -> int:
    """Execute one task and write its artifact; 0 iff everything converged."""
    energies = None
    if cfg.task == "scf":
        rows, ok = _run_scf(cfg)
    elif cfg.task == "polarizability":
        rows, ok = _run_polarizability(cfg)
    elif cfg.task == "compare":
        rows, ok = _run_polarizability(cfg)
        energies = {r.scheme: (r.energy, r.converged) for r in rows}
    else:
        rows, ok = _run_series(cfg)
    text = (_emit_csv(cfg, rows, energies) if cfg.out_format == "csv"
            else _emit_json(cfg, rows, energies))
    if cfg.out_path:
        with open(cfg.out_path, "w") as fh:
            fh.write(text)
    elif stream is not None:
        stream.write(text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sicdft",
        description="grid DFT with self-interaction-corrected schemes")
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        p = sub.add_parser(task)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--scheme", help="comma-separated scheme ids")
        p.add_argument("--out", help="output file path")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 2
    data["task"] = args.task
    if args.scheme:
        data.pop("schemes", None)
        data["scheme"] = [s.strip() for s in args.scheme.split(",")]
    if args.out or args.format:
        output = dict(data.get("output", {}))
        if args.out:
            output["path"] = args.out
        if args.format:
            output["format"] = args.format
        data["output"] = output
    if args.verbose:
        data.setdefault("scf", {})["verbose"] = True
    try:
        cfg = parse_config(data)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
