"""INI-style run configuration: parsing, defaults and the hash that names run directories."""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .ensemble import InitialProfile
from .harness import RunConfig

SCHEMA = {
    "profile": {
        "center_x": "0, 0, 0",
        "center_v": "0.3, 0, 0",
        "radius_x": "1.0",
        "radius_v": "0.5",
        "amplitude": "20.0",
    },
    "discretization": {
        "n_per_axis": "3",
        "delta": "0.2",
        "dt": "0.05",
        "t_end": "1.0",
    },
    "ladder": {
        "c_list": "4, 8, 16, 32",
        "c": "4",
    },
    "probes": {
        "box_half_width": "1.5",
        "box_points": "4",
        "n_phase_probes": "64",
    },
    "solver": {
        "fixed_point_tol": "1e-12",
        "fixed_point_max_iter": "64",
        "include_c4": "true",
        "rho2_source": "lagrangian",
    },
    "checks": {
        "energy_drift_tol": "1e-3",
        "ibp_tol": "5e-3",
        "w2_tol": "1e-10",
        "initial_field_tol": "1e-8",
        "darwin_order_min": "2.5",
        "darwin_order_max": "3.5",
        "newtonian_order_min": "0.8",
        "newtonian_order_max": "1.4",
        "eps_list": "1, 0.25, 0.0625",
    },
    "output": {
        "root": "runs",
    },
}


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(p) for p in text.replace(",", " ").split())


@dataclass(frozen=True)
class CliConfig:
    """Parsed configuration: the shared RunConfig plus CLI-only settings."""

    run: RunConfig
    c: float
    checks: dict
    output_root: Path
    raw: dict = field(repr=False, default_factory=dict)

    def digest(self):
        blob = json.dumps(self.raw, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def run_dir(self):
        return self.output_root / self.digest()


def load_config(path) -> CliConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_dict(SCHEMA)
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    parser.read(path)
    unknown = [s for s in parser.sections() if s not in SCHEMA]
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    for section in SCHEMA:
        extra = [k for k in parser[section] if k not in SCHEMA[section]]
        if extra:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(extra)}")
    raw = {s: dict(parser[s]) for s in SCHEMA}
    try:
        p = parser["profile"]
        profile = InitialProfile(_floats(p["center_x"]), _floats(p["center_v"]), float(p["radius_x"]),
                                 float(p["radius_v"]), float(p["amplitude"]))
        d, sv, pr = parser["discretization"], parser["solver"], parser["probes"]
        run = RunConfig(
            profile=profile,
            n_per_axis=d.getint("n_per_axis"),
            delta=d.getfloat("delta"),
            dt=d.getfloat("dt"),
            t_end=d.getfloat("t_end"),
            c_list=_floats(parser["ladder"]["c_list"]),
            box_half_width=pr.getfloat("box_half_width"),
            box_points=pr.getint("box_points"),
            n_phase_probes=pr.getint("n_phase_probes"),
            fixed_point_tol=sv.getfloat("fixed_point_tol"),
            fixed_point_max_iter=sv.getint("fixed_point_max_iter"),
            ibp_tol=parser["checks"].getfloat("ibp_tol"),
            include_c4=sv.getboolean("include_c4"),
            rho2_source=sv["rho2_source"].strip(),
        )
        ch = parser["checks"]
        checks = {k: (_floats(ch[k]) if k == "eps_list" else ch.getfloat(k)) for k in SCHEMA["checks"]}
        c = parser["ladder"].getfloat("c")
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    if c < 4:
        raise ConfigError("c must be at least 4")
    root = Path(parser["output"]["root"])
    if not root.is_absolute():
        root = path.parent / root
    return CliConfig(run, c, checks, root, raw)
