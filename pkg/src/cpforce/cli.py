"""Scenario files in, deterministic result tables out.

A scenario is a TOML file with sections atom, stack, temperatures,
numerics and optionally sweep.  Every dimensionful entry carries an
explicit unit key (SI assumed where omitted) and is converted to SI at
parse time; unknown keys are rejected.  Commands write one table per
run, CSV (metadata comments, header row, units row, data) or the JSON
mirror, with all warnings routed to a log stream so that rerunning a
scenario reproduces the data section byte for byte.

Exit status: 0 success, 2 scenario or argument validation failure,
3 numerical non-convergence (the table is still written).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.constants import c as C0, e as Q_E, hbar

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import __version__
from .atomdyn import AtomSpec, evolve_populations, rates_and_shifts
from .forcecore import PART_NAMES, force_component, lifshitz_force, total_force
from .greenfunc import Layer, LayerStack
from .materials import MaterialModel
from .thermalenv import TemperatureField

__all__ = ["Scenario", "ScenarioError", "ResultTable", "load_scenario",
           "parse_scenario", "scenario_to_dict", "run", "main"]

_ENERGY_UNITS = {"J": 1.0, "eV": Q_E}
_FREQUENCY_UNITS = {"rad/s": 1.0, "eV": Q_E / hbar}
_LENGTH_UNITS = {"m": 1.0, "um": 1e-6, "µm": 1e-6, "nm": 1e-9}
_DIPOLE_UNITS = {"C*m": 1.0, "C·m": 1.0, "debye": 1e-21 / C0}
_TEMPERATURE_UNITS = {"K": 1.0}


class ScenarioError(Exception):
    """A scenario failed validation; `key` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


def _fail(path, message):
    raise ScenarioError(f"{path}: {message}", key=path)


def _check_keys(table, allowed, path):
    for key in table:
        if key not in allowed:
            raise ScenarioError(f"unknown key '{path}.{key}'",
                                key=f"{path}.{key}")


def _get_table(data, key, path, required=True):
    if key not in data:
        if required:
            _fail(f"{path}.{key}", "missing required section")
        return None
    value = data[key]
    if not isinstance(value, dict):
        _fail(f"{path}.{key}", "expected a table")
    return value


def _get_str(table, key, path, required=True, default=None):
    if key not in table:
        if required:
            _fail(f"{path}.{key}", "missing required key")
        return default
    value = table[key]
    if not isinstance(value, str):
        _fail(f"{path}.{key}", "expected a string")
    return value


def _get_number(table, key, path, required=True, default=None):
    if key not in table:
        if required:
            _fail(f"{path}.{key}", "missing required key")
        return default
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(f"{path}.{key}", "expected a number")
    return float(value)


def _get_int(table, key, path, required=True, default=None):
    if key not in table:
        if required:
            _fail(f"{path}.{key}", "missing required key")
        return default
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(f"{path}.{key}", "expected an integer")
    return value


def _get_list(table, key, path, required=True, default=None):
    if key not in table:
        if required:
            _fail(f"{path}.{key}", "missing required key")
        return default
    value = table[key]
    if not isinstance(value, list):
        _fail(f"{path}.{key}", "expected a list")
    return value


def _get_tables(table, key, path, required=True, default=()):
    raw = _get_list(table, key, path, required=required, default=None)
    if raw is None:
        return list(default)
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            _fail(f"{path}.{key}[{i}]", "expected a table")
    return raw


def _number_list(table, key, path, required=True, default=None):
    raw = _get_list(table, key, path, required=required, default=None)
    if raw is None:
        return default
    out = []
    for i, value in enumerate(raw):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            _fail(f"{path}.{key}[{i}]", "expected a number")
        out.append(float(value))
    return out


def _unit(table, key, path, units, default):
    name = _get_str(table, key, path, required=False, default=default)
    if name not in units:
        _fail(f"{path}.{key}",
              f"unknown unit '{name}' (one of {sorted(units)})")
    return name, units[name]


# -- scenario representation ----------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    """Evaluation times for the dynamics command, in seconds."""

    start: float
    stop: float
    points: int
    spacing: str = "linear"

    def values(self):
        if self.spacing == "log":
            return np.geomspace(self.start, self.stop, self.points)
        return np.linspace(self.start, self.stop, self.points)


@dataclass(frozen=True)
class Numerics:
    """Tolerances and mode flags, SI throughout."""

    rel_tol: float = 1e-8
    matsubara_rel_tol: float = 1e-10
    shift_mode: str = "perturbative"
    force_mode: str = "full_complex"
    time_grid: TimeGrid = None


@dataclass(frozen=True)
class Sweep:
    """One sweep axis: atom height or uniform temperature."""

    axis: str
    values: tuple


@dataclass(frozen=True)
class Scenario:
    """Parsed scenario, all quantities in SI."""

    atom: AtomSpec
    stack: LayerStack
    temperatures: TemperatureField
    numerics: Numerics
    initial_populations: tuple
    sweep: Sweep = None

    @property
    def labels(self):
        return tuple(lab for lab, _ in self.atom.levels)


def _parse_vec3(table, key, path, scale, required=True):
    raw = _number_list(table, key, path, required=required, default=None)
    if raw is None:
        return np.zeros(3)
    if len(raw) != 3:
        _fail(f"{path}.{key}", "expected a list of three numbers")
    return scale * np.array(raw)


def _parse_atom(data):
    table = _get_table(data, "atom", "scenario")
    _check_keys(table, {"levels", "dipoles", "energy_unit", "dipole_unit",
                        "z_A", "z_A_unit", "initial_populations"}, "atom")
    _, e_scale = _unit(table, "energy_unit", "atom", _ENERGY_UNITS, "J")
    _, d_scale = _unit(table, "dipole_unit", "atom", _DIPOLE_UNITS, "C*m")
    _, z_scale = _unit(table, "z_A_unit", "atom", _LENGTH_UNITS, "m")

    labels, energies = [], []
    for i, entry in enumerate(_get_tables(table, "levels", "atom")):
        path = f"atom.levels[{i}]"
        _check_keys(entry, {"label", "energy"}, path)
        label = _get_str(entry, "label", path)
        if label in labels:
            _fail(f"{path}.label", f"duplicate level label '{label}'")
        labels.append(label)
        energies.append(e_scale * _get_number(entry, "energy", path))
    if not labels:
        _fail("atom.levels", "need at least one level")

    n = len(labels)
    dipoles = np.zeros((n, n, 3), dtype=complex)
    seen = set()
    for i, entry in enumerate(_get_tables(table, "dipoles", "atom",
                                          required=False)):
        path = f"atom.dipoles[{i}]"
        _check_keys(entry, {"from", "to", "re", "im"}, path)
        lab_a = _get_str(entry, "from", path)
        lab_b = _get_str(entry, "to", path)
        for lab in (lab_a, lab_b):
            if lab not in labels:
                _fail(path, f"unknown level label '{lab}'")
        ia, ib = labels.index(lab_a), labels.index(lab_b)
        if ia == ib:
            _fail(path, "dipole needs two distinct levels")
        if frozenset((ia, ib)) in seen:
            _fail(path, f"duplicate dipole for levels "
                        f"'{lab_a}' and '{lab_b}'")
        seen.add(frozenset((ia, ib)))
        vec = _parse_vec3(entry, "re", path, d_scale) \
            + 1j * _parse_vec3(entry, "im", path, d_scale, required=False)
        dipoles[ia, ib] = vec
        dipoles[ib, ia] = np.conj(vec)

    z_a = z_scale * _get_number(table, "z_A", "atom")
    try:
        atom = AtomSpec(levels=tuple(zip(labels, energies)), dipoles=dipoles,
                        z_A=z_a)
    except ValueError as err:
        raise ScenarioError(f"atom: {err}", key="atom")

    pops = _number_list(table, "initial_populations", "atom", required=False)
    if pops is None:
        pops = [0.0] * n
        pops[int(np.argmin(energies))] = 1.0
    if len(pops) != n:
        _fail("atom.initial_populations", f"expected {n} entries")
    if min(pops) < 0.0 or abs(sum(pops) - 1.0) > 1e-9:
        _fail("atom.initial_populations",
              "populations must be >= 0 and sum to 1")
    return atom, tuple(pops)


def _parse_oscillators(table, key, path, scale, required):
    raw = _get_list(table, key, path, required=required, default=None)
    if raw is None:
        return ()
    out = []
    for i, triple in enumerate(raw):
        entry = f"{path}.{key}[{i}]"
        if not isinstance(triple, list) or len(triple) != 3 or any(
                isinstance(x, bool) or not isinstance(x, (int, float))
                for x in triple):
            _fail(entry, "expected [plasma, resonance, damping]")
        out.append(tuple(scale * float(x) for x in triple))
    return tuple(out)


_OSC_KEYS = {"eps_oscillators", "mu_oscillators"}
_TABLE_KEYS = {"omega", "eps_re", "eps_im", "mu_re", "mu_im"}


def _parse_layer(entry, i):
    path = f"stack.layers[{i}]"
    _check_keys(entry, {"model", "thickness", "thickness_unit",
                        "frequency_unit"} | _OSC_KEYS | _TABLE_KEYS, path)
    model = _get_str(entry, "model", path)
    _, f_scale = _unit(entry, "frequency_unit", path, _FREQUENCY_UNITS,
                       "rad/s")
    stray = {"vacuum": _OSC_KEYS | _TABLE_KEYS,
             "drude_lorentz": _TABLE_KEYS,
             "tabulated": _OSC_KEYS}.get(model)
    if stray is None:
        _fail(f"{path}.model",
              "expected 'vacuum', 'drude_lorentz' or 'tabulated'")
    for key in stray & set(entry):
        _fail(f"{path}.{key}", f"not a '{model}' key")

    try:
        if model == "vacuum":
            material = MaterialModel.vacuum()
        elif model == "drude_lorentz":
            material = MaterialModel.drude_lorentz(
                _parse_oscillators(entry, "eps_oscillators", path, f_scale,
                                   required=True),
                _parse_oscillators(entry, "mu_oscillators", path, f_scale,
                                   required=False))
        else:
            omega = f_scale * np.array(_number_list(entry, "omega", path))
            eps = np.array(_number_list(entry, "eps_re", path)) \
                + 1j * np.array(_number_list(entry, "eps_im", path))
            mu = None
            if "mu_re" in entry or "mu_im" in entry:
                mu = np.array(_number_list(entry, "mu_re", path)) \
                    + 1j * np.array(_number_list(entry, "mu_im", path))
            material = MaterialModel.tabulated(omega, eps, mu)
    except ValueError as err:
        raise ScenarioError(f"{path}: {err}", key=path)

    thickness = _get_number(entry, "thickness", path, required=False)
    if thickness is not None:
        _, t_scale = _unit(entry, "thickness_unit", path, _LENGTH_UNITS, "m")
        thickness = t_scale * thickness
    try:
        return Layer(material, thickness)
    except ValueError as err:
        raise ScenarioError(f"{path}: {err}", key=path)


def _parse_stack(data):
    table = _get_table(data, "stack", "scenario")
    _check_keys(table, {"layers"}, "stack")
    layers = [_parse_layer(entry, i)
              for i, entry in enumerate(_get_tables(table, "layers",
                                                    "stack"))]
    try:
        return LayerStack(tuple(layers))
    except ValueError as err:
        raise ScenarioError(f"stack.layers: {err}", key="stack.layers")


def _parse_temperatures(data, stack):
    table = _get_table(data, "temperatures", "scenario")
    _check_keys(table, {"environment", "layers"}, "temperatures")
    environment = _get_number(table, "environment", "temperatures")
    layers = _number_list(table, "layers", "temperatures")
    if len(layers) != len(stack.layers):
        _fail("temperatures.layers",
              f"expected one temperature per stack layer "
              f"({len(stack.layers)})")
    try:
        return TemperatureField(environment, tuple(layers))
    except ValueError as err:
        raise ScenarioError(f"temperatures: {err}", key="temperatures")


def _parse_time_grid(table, path):
    _check_keys(table, {"start", "stop", "points", "spacing"}, path)
    start = _get_number(table, "start", path)
    stop = _get_number(table, "stop", path)
    points = _get_int(table, "points", path)
    spacing = _get_str(table, "spacing", path, required=False,
                       default="linear")
    if spacing not in ("linear", "log"):
        _fail(f"{path}.spacing", "expected 'linear' or 'log'")
    if start < 0.0 or stop <= start:
        _fail(path, "need 0 <= start < stop")
    if spacing == "log" and start <= 0.0:
        _fail(f"{path}.start", "log spacing needs start > 0")
    if points < 2:
        _fail(f"{path}.points", "need at least two points")
    return TimeGrid(start=start, stop=stop, points=points, spacing=spacing)


def _parse_numerics(data):
    table = _get_table(data, "numerics", "scenario", required=False)
    if table is None:
        return Numerics()
    _check_keys(table, {"rel_tol", "matsubara_rel_tol", "shift_mode",
                        "force_mode", "time_grid"}, "numerics")
    rel_tol = _get_number(table, "rel_tol", "numerics", required=False,
                          default=1e-8)
    mats_tol = _get_number(table, "matsubara_rel_tol", "numerics",
                           required=False, default=1e-10)
    if not 0.0 < rel_tol < 1.0:
        _fail("numerics.rel_tol", "expected 0 < rel_tol < 1")
    if not 0.0 < mats_tol < 1.0:
        _fail("numerics.matsubara_rel_tol",
              "expected 0 < matsubara_rel_tol < 1")
    shift_mode = _get_str(table, "shift_mode", "numerics", required=False,
                          default="perturbative")
    if shift_mode not in ("perturbative", "fixed_point"):
        _fail("numerics.shift_mode",
              "expected 'perturbative' or 'fixed_point'")
    force_mode = _get_str(table, "force_mode", "numerics", required=False,
                          default="full_complex")
    if force_mode not in ("full_complex", "perturbative"):
        _fail("numerics.force_mode",
              "expected 'full_complex' or 'perturbative'")
    grid = None
    if "time_grid" in table:
        if not isinstance(table["time_grid"], dict):
            _fail("numerics.time_grid", "expected a table")
        grid = _parse_time_grid(table["time_grid"], "numerics.time_grid")
    return Numerics(rel_tol=rel_tol, matsubara_rel_tol=mats_tol,
                    shift_mode=shift_mode, force_mode=force_mode,
                    time_grid=grid)


def _parse_sweep(data):
    table = _get_table(data, "sweep", "scenario", required=False)
    if table is None:
        return None
    _check_keys(table, {"axis", "values", "unit"}, "sweep")
    axis = _get_str(table, "axis", "sweep")
    if axis not in ("z_A", "temperature"):
        _fail("sweep.axis", "expected 'z_A' or 'temperature'")
    units = _LENGTH_UNITS if axis == "z_A" else _TEMPERATURE_UNITS
    _, scale = _unit(table, "unit", "sweep", units,
                     "m" if axis == "z_A" else "K")
    values = _number_list(table, "values", "sweep")
    if not values:
        _fail("sweep.values", "need at least one value")
    values = tuple(scale * v for v in values)
    if axis == "z_A" and min(values) <= 0.0:
        _fail("sweep.values", "heights must be > 0")
    if axis == "temperature" and min(values) < 0.0:
        _fail("sweep.values", "temperatures must be >= 0")
    return Sweep(axis=axis, values=values)


def parse_scenario(data):
    """Scenario from a parsed mapping; raises ScenarioError when invalid."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario: expected a table at the top level",
                            key="scenario")
    _check_keys(data, {"atom", "stack", "temperatures", "numerics", "sweep"},
                "scenario")
    atom, pops = _parse_atom(data)
    stack = _parse_stack(data)
    temperatures = _parse_temperatures(data, stack)
    numerics = _parse_numerics(data)
    sweep = _parse_sweep(data)
    return Scenario(atom=atom, stack=stack, temperatures=temperatures,
                    numerics=numerics, initial_populations=pops, sweep=sweep)


def load_scenario(path):
    """Parse a TOML scenario file; returns (Scenario, sha256 hex digest)."""
    try:
        with open(path, "rb") as handle:
            raw = handle.read()
    except OSError as err:
        raise ScenarioError(f"cannot read scenario file: {err}",
                            key="scenario")
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, tomllib.TOMLDecodeError) as err:
        raise ScenarioError(f"scenario file is not valid TOML: {err}",
                            key="scenario")
    return parse_scenario(data), hashlib.sha256(raw).hexdigest()


def _material_to_dict(material):
    if material.kind == "vacuum":
        return {"model": "vacuum"}
    if material.kind == "drude_lorentz":
        out = {"model": "drude_lorentz", "frequency_unit": "rad/s",
               "eps_oscillators": [list(osc) for osc in material.eps_osc]}
        if material.mu_osc:
            out["mu_oscillators"] = [list(osc) for osc in material.mu_osc]
        return out
    out = {"model": "tabulated", "frequency_unit": "rad/s",
           "omega": [float(w) for w in material.table_grid],
           "eps_re": [complex(e).real for e in material.table_eps],
           "eps_im": [complex(e).imag for e in material.table_eps]}
    if material.table_mu:
        out["mu_re"] = [complex(m).real for m in material.table_mu]
        out["mu_im"] = [complex(m).imag for m in material.table_mu]
    return out


def scenario_to_dict(scenario):
    """Plain mapping in SI units; parse_scenario inverts it exactly."""
    atom = scenario.atom
    labels = scenario.labels
    dipoles = []
    for i in range(atom.n_levels):
        for j in range(i + 1, atom.n_levels):
            vec = atom.dipoles[i, j]
            if np.any(vec != 0.0):
                dipoles.append({"from": labels[i], "to": labels[j],
                                "re": [float(x) for x in vec.real],
                                "im": [float(x) for x in vec.imag]})
    data = {
        "atom": {
            "energy_unit": "J", "dipole_unit": "C*m", "z_A_unit": "m",
            "z_A": atom.z_A,
            "levels": [{"label": lab, "energy": float(en)}
                       for lab, en in atom.levels],
            "dipoles": dipoles,
            "initial_populations": list(scenario.initial_populations),
        },
        "stack": {"layers": []},
        "temperatures": {
            "environment": scenario.temperatures.environment,
            "layers": list(scenario.temperatures.layers),
        },
        "numerics": {
            "rel_tol": scenario.numerics.rel_tol,
            "matsubara_rel_tol": scenario.numerics.matsubara_rel_tol,
            "shift_mode": scenario.numerics.shift_mode,
            "force_mode": scenario.numerics.force_mode,
        },
    }
    for layer in scenario.stack.layers:
        entry = _material_to_dict(layer.material)
        if layer.thickness is not None:
            entry["thickness"] = layer.thickness
            entry["thickness_unit"] = "m"
        data["stack"]["layers"].append(entry)
    grid = scenario.numerics.time_grid
    if grid is not None:
        data["numerics"]["time_grid"] = {
            "start": grid.start, "stop": grid.stop, "points": grid.points,
            "spacing": grid.spacing}
    if scenario.sweep is not None:
        data["sweep"] = {"axis": scenario.sweep.axis,
                         "unit": "m" if scenario.sweep.axis == "z_A" else "K",
                         "values": list(scenario.sweep.values)}
    return data


# -- result tables ---------------------------------------------------------


@dataclass(frozen=True)
class ResultTable:
    """Column names, one unit per column, data rows, metadata block."""

    columns: tuple
    units: tuple
    rows: tuple
    metadata: dict


def _metadata(command, digest, numerics):
    return {"tool": f"cpforce {__version__}", "command": command,
            "scenario_sha256": digest, "rel_tol": numerics.rel_tol,
            "matsubara_rel_tol": numerics.matsubara_rel_tol,
            "shift_mode": numerics.shift_mode,
            "force_mode": numerics.force_mode}


def _fmt(value):
    # repr of a Python float is the shortest round-trip form and is
    # deterministic, which keeps rerun outputs byte-identical
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(table, stream):
    for key, value in table.metadata.items():
        stream.write(f"# {key}: {_fmt(value)}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(table.columns)
    writer.writerow(table.units)
    for row in table.rows:
        writer.writerow([_fmt(cell) for cell in row])


def write_json(table, stream):
    obj = {"metadata": table.metadata,
           "columns": list(table.columns),
           "units": list(table.units),
           "rows": [[cell if isinstance(cell, str) else
                     (int(cell) if isinstance(cell, (int, np.integer))
                      else float(cell)) for cell in row]
                    for row in table.rows]}
    json.dump(obj, stream, indent=2)
    stream.write("\n")


# -- commands --------------------------------------------------------------


def _map_ordered(fn, items, threads):
    # collected in input order, so the thread count never changes the output
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _level_forces(scenario, rates, threads):
    num = scenario.numerics

    def one(n):
        return force_component(scenario.atom, scenario.stack,
                               scenario.temperatures, n, rates,
                               mode=num.force_mode, rel_tol=num.rel_tol)

    return _map_ordered(one, range(scenario.atom.n_levels), threads)


def _rates_bundle(scenario):
    num = scenario.numerics
    rates = rates_and_shifts(scenario.atom, scenario.stack,
                             scenario.temperatures, mode=num.shift_mode,
                             rel_tol=num.rel_tol)
    issues = []
    if not rates.converged:
        issues.append("fixed-point frequency shifts did not converge; "
                      "last iterate kept")
    return rates, issues


_FORCE_COLUMNS = ("level", "weight", "F_x", "F_y", "F_z") \
    + tuple(f"{name}_z" for name in PART_NAMES) + ("error",)
_FORCE_UNITS = ("-", "-") + ("N",) * 8


def _force_cells(fvec, parts, errors):
    cells = tuple(float(x) for x in fvec)
    cells += tuple(float(parts[name][2]) for name in PART_NAMES)
    return cells + (float(sum(errors.values())),)


def _force_table(scenario, result, command, digest):
    rows = []
    for label, weight, level in zip(scenario.labels, result.weights,
                                    result.levels):
        rows.append((label, float(weight))
                    + _force_cells(level.F, level.parts, level.errors))
    rows.append(("total", float(np.sum(result.weights)))
                + _force_cells(result.F, result.parts, result.errors))
    return ResultTable(columns=_FORCE_COLUMNS, units=_FORCE_UNITS,
                       rows=tuple(rows),
                       metadata=_metadata(command, digest,
                                          scenario.numerics))


def _cmd_rates(scenario, digest, threads):
    rates, issues = _rates_bundle(scenario)
    labels = scenario.labels
    rows = []
    for n in range(scenario.atom.n_levels):
        for k in range(scenario.atom.n_levels):
            if k == n:
                continue
            rows.append((labels[n], labels[k],
                         float(rates.omega_shifted[n, k]),
                         float(rates.gamma[n, k])))
    table = ResultTable(columns=("from", "to", "omega", "gamma"),
                        units=("-", "-", "rad/s", "1/s"), rows=tuple(rows),
                        metadata=_metadata("rates", digest,
                                           scenario.numerics))
    return table, issues


def _cmd_shifts(scenario, digest, threads):
    rates, issues = _rates_bundle(scenario)
    rows = tuple((label, float(energy), float(rates.delta_omega[n]),
                  float(rates.gamma_total[n]))
                 for n, (label, energy) in enumerate(scenario.atom.levels))
    table = ResultTable(
        columns=("level", "energy", "delta_omega", "gamma_total"),
        units=("-", "J", "rad/s", "1/s"), rows=rows,
        metadata=_metadata("shifts", digest, scenario.numerics))
    return table, issues


def _cmd_force(scenario, digest, threads):
    rates, issues = _rates_bundle(scenario)
    num = scenario.numerics
    levels = _level_forces(scenario, rates, threads)
    result = total_force(scenario.atom, scenario.stack,
                         scenario.temperatures,
                         np.array(scenario.initial_populations), rates,
                         mode=num.force_mode, rel_tol=num.rel_tol,
                         level_forces=levels)
    if not result.converged:
        issues.append("force quadrature budget exhausted; error estimate "
                      "is not finite")
    return _force_table(scenario, result, "force", digest), issues


def _cmd_equilibrium(scenario, digest, threads):
    tfield = scenario.temperatures
    if not tfield.is_uniform or tfield.environment <= 0.0:
        _fail("temperatures",
              "equilibrium command needs a uniform temperature > 0")
    result = lifshitz_force(scenario.atom, scenario.stack,
                            tfield.environment,
                            rel_tol=scenario.numerics.rel_tol)
    issues = []
    if not result.converged:
        issues.append("Matsubara evaluation did not converge")
    return _force_table(scenario, result, "equilibrium", digest), issues


def _cmd_dynamics(scenario, digest, threads):
    grid = scenario.numerics.time_grid
    if grid is None:
        _fail("numerics.time_grid", "dynamics needs a time grid")
    rates, issues = _rates_bundle(scenario)
    num = scenario.numerics
    levels = _level_forces(scenario, rates, threads)
    if not all(level.converged for level in levels):
        issues.append("force quadrature budget exhausted; error estimate "
                      "is not finite")
    sigma0 = np.array(scenario.initial_populations)
    rows = []
    for t in grid.values():
        pops = evolve_populations(rates, sigma0, t)
        result = total_force(scenario.atom, scenario.stack,
                             scenario.temperatures, pops, rates,
                             mode=num.force_mode, rel_tol=num.rel_tol,
                             level_forces=levels)
        rows.append((float(t),)
                    + tuple(float(p) for p in pops.populations)
                    + (float(result.F[2]),
                       float(sum(result.errors.values()))))
    columns = ("t",) + tuple(f"sigma_{lab}" for lab in scenario.labels) \
        + ("F_z", "error")
    units = ("s",) + ("-",) * scenario.atom.n_levels + ("N", "N")
    table = ResultTable(columns=columns, units=units, rows=tuple(rows),
                        metadata=_metadata("dynamics", digest, num))
    return table, issues


def _cmd_sweep(scenario, digest, threads):
    sweep = scenario.sweep
    if sweep is None:
        _fail("sweep", "sweep command needs a [sweep] section")
    num = scenario.numerics
    sigma0 = np.array(scenario.initial_populations)

    def one(value):
        if sweep.axis == "z_A":
            atom = replace(scenario.atom, z_A=value)
            tfield = scenario.temperatures
        else:
            atom = scenario.atom
            tfield = TemperatureField.uniform(value,
                                              len(scenario.stack.layers))
        rates = rates_and_shifts(atom, scenario.stack, tfield,
                                 mode=num.shift_mode, rel_tol=num.rel_tol)
        result = total_force(atom, scenario.stack, tfield, sigma0, rates,
                             mode=num.force_mode, rel_tol=num.rel_tol)
        return result, rates.converged

    results = _map_ordered(one, sweep.values, threads)
    issues = []
    if not all(flag for _, flag in results):
        issues.append("fixed-point frequency shifts did not converge; "
                      "last iterate kept")
    if not all(result.converged for result, _ in results):
        issues.append("force quadrature budget exhausted; error estimate "
                      "is not finite")
    rows = tuple(
        (float(value),) + _force_cells(result.F, result.parts, result.errors)
        for value, (result, _) in zip(sweep.values, results))
    columns = (sweep.axis, "F_x", "F_y", "F_z") \
        + tuple(f"{name}_z" for name in PART_NAMES) + ("error",)
    units = ("m" if sweep.axis == "z_A" else "K",) + ("N",) * 8
    table = ResultTable(columns=columns, units=units, rows=rows,
                        metadata=_metadata("sweep", digest, num))
    return table, issues


_COMMANDS = {"rates": _cmd_rates, "shifts": _cmd_shifts,
             "dynamics": _cmd_dynamics, "force": _cmd_force,
             "equilibrium": _cmd_equilibrium, "sweep": _cmd_sweep}


# -- driver ----------------------------------------------------------------


def _report_error(kind, message, key=None):
    sys.stderr.write(json.dumps({"error": kind, "key": key,
                                 "message": message}) + "\n")


def _emit_log(events, log_path):
    lines = "".join(json.dumps(event) + "\n" for event in events)
    if log_path is None:
        sys.stderr.write(lines)
    else:
        with open(log_path, "w", encoding="utf-8") as handle:
            handle.write(lines)


def run(command, scenario_path, out_path, fmt="csv", threads=1,
        log_path=None):
    """Execute one command; returns the exit status (0, 2 or 3)."""
    try:
        if command not in _COMMANDS:
            raise ScenarioError(f"unknown command '{command}'", key="command")
        if fmt not in ("csv", "json"):
            raise ScenarioError(f"unknown format '{fmt}'", key="format")
        scenario, digest = load_scenario(scenario_path)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            table, issues = _COMMANDS[command](scenario, digest,
                                               max(1, int(threads)))
    except ScenarioError as err:
        _report_error("validation", str(err), err.key)
        return 2
    events = [{"level": "warning", "category": type(w.message).__name__,
               "message": str(w.message)} for w in caught]
    events += [{"level": "error", "category": "non_convergence",
                "message": message} for message in issues]
    try:
        with open(out_path, "w", encoding="utf-8", newline="") as handle:
            if fmt == "csv":
                write_csv(table, handle)
            else:
                write_json(table, handle)
    except OSError as err:
        _report_error("io", str(err))
        return 1
    _emit_log(events, log_path)
    return 0 if not issues else 3


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cpforce",
        description="Thermal Casimir-Polder rates, shifts, dynamics and "
                    "forces from a TOML scenario file.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
            ("rates", "transition rates at the shifted frequencies"),
            ("shifts", "level shifts and total loss rates"),
            ("dynamics", "populations and force on the configured grid"),
            ("force", "state-resolved force at the initial populations"),
            ("equilibrium", "long-time Lifshitz force at uniform T"),
            ("sweep", "force along the configured axis")):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--scenario", required=True,
                         help="path to the TOML scenario file")
        cmd.add_argument("--out", required=True,
                         help="path of the table to write")
        cmd.add_argument("--format", choices=("csv", "json"), default="csv")
        cmd.add_argument("--threads", type=int, default=1,
                         help="parallel workers for sweeps and level forces")
        cmd.add_argument("--log", default=None,
                         help="write warnings as JSON lines here instead "
                              "of stderr")
    args = parser.parse_args(argv)
    return run(args.command, args.scenario, args.out, fmt=args.format,
               threads=args.threads, log_path=args.log)


if __name__ == "__main__":
    sys.exit(main())
