"""Command line entry point: forward simulation, moments and reconstructions.

Each inverse subcommand reads only the serialized output of the previous
stage, so reconstructions never see the true obstacle geometry.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import warnings
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .balayage import balayage, write_contours_csv as write_indicator_csv, write_pgm
from .bem import MeasurementSet, apply_noise, forward_measurements
from .bergman import DEFAULT_LEVELS, bergman_coeffs, theta_contours, theta_grid, write_contours_csv
from .errors import InvalidInputError, ParseError, StokesMomentsError, ValidationError
from .geometry import ParamCurve, Scenario, circle
from .grid import GridSpec
from .moments import MomentTable, moment_matrix
from .prony import PronySolution, prony_solve

log = logging.getLogger("stokesmoments")

SUBCOMMANDS = ("forward", "moments", "bergman", "prony", "balayage", "pipeline")


# ---------------------------------------------------------------------------
# scenarios


def _schema() -> dict:
    text = resources.files("stokesmoments.scenarios").joinpath("scenario.schema.json").read_text()
    return json.loads(text)


def bundled_scenario(name: str) -> Path:
    """Path of a scenario file shipped with the package (``example1`` ...)."""
    path = resources.files("stokesmoments.scenarios").joinpath(f"{name}.json")
    if not path.is_file():
        raise InvalidInputError(f"no bundled scenario named {name!r}")
    return Path(str(path))


def _resolve_scenario_path(spec: str) -> Path:
    path = Path(spec)
    if path.exists() or path.suffix == ".json":
        return path
    return bundled_scenario(spec)


def scenario_from_dict(data: dict) -> Scenario:
    try:
        jsonschema.validate(data, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ParseError(f"scenario schema violation at {where}: {exc.message}") from exc
    outer_data = data.get("outer")
    if outer_data is None:
        outer, n_outer = circle(0, 1.0), 256
    else:
        outer, n_outer = ParamCurve.from_dict(outer_data), int(outer_data.get("n", 256))
    obstacles = [ParamCurve.from_dict(o) for o in data["obstacles"]]
    ns = [int(o.get("n", 256)) for o in data["obstacles"]]
    scenario = Scenario(outer, obstacles, n_outer, ns, float(data.get("margin", 0.02)), data.get("name", ""))
    try:
        scenario.validate()
    except InvalidInputError as exc:
        raise ValidationError(str(exc)) from exc
    return scenario


def parse_scenario(path) -> tuple:
    """Read a scenario file; returns ``(Scenario, defaults dict)``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read scenario {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: line 1: top level must be an object")
    try:
        return scenario_from_dict(data), dict(data.get("defaults", {}))
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# configuration and manifest


@dataclass
class RunConfig:
    subcommand: str
    out: Path
    scenario: str | None = None
    input: str | None = None
    m: int | None = None
    n_prony: int | None = None
    grid: int | None = None
    noise: float = 0.0
    seed: int = 0
    lambda_levels: tuple | None = None
    tol: float = 1e-9

    def validate(self) -> "RunConfig":
        if self.subcommand not in SUBCOMMANDS:
            raise InvalidInputError(f"unknown subcommand {self.subcommand!r}")
        if self.m is not None and self.m < 3:
            raise InvalidInputError("m must be at least 3")
        if self.n_prony is not None and self.n_prony < 0:
            raise InvalidInputError("n-prony must be non-negative")
        if self.m is not None and self.n_prony is not None and 2 * self.n_prony > self.m - 1:
            raise InvalidInputError(f"n-prony {self.n_prony} exceeds (m - 1) / 2 for m = {self.m}")
        if self.grid is not None and self.grid < 16:
            raise InvalidInputError("grid must have at least 16 samples per axis")
        if not np.isfinite(self.noise) or self.noise < 0:
            raise InvalidInputError("noise level must be non-negative")
        if not (self.tol > 0):
            raise InvalidInputError("tol must be positive")
        return self

    def to_dict(self) -> dict:
        out = asdict(self)
        out["out"] = str(self.out)
        out["lambda_levels"] = None if self.lambda_levels is None else list(self.lambda_levels)
        return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


@dataclass
class Manifest:
    config: RunConfig
    artifacts: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    status: str = "ok"
    error: dict | None = None

    def add(self, name: str, path: Path) -> None:
        self.artifacts[name] = {"path": path.name, "sha256": _sha256(path)}

    def write(self) -> Path:
        path = self.config.out / "manifest.json"
        body = {
            "format": "stokesmoments.manifest/1",
            "config": self.config.to_dict(),
            "status": self.status,
            "error": self.error,
            "artifacts": self.artifacts,
            "diagnostics": self.diagnostics,
            "warnings": self.warnings,
        }
        path.write_text(json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n")
        return path


# ---------------------------------------------------------------------------
# stages


def _stage(stage: str):
    """Tag escaping library errors with the stage that raised them."""

    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StokesMomentsError as exc:
                if not getattr(exc, "_tagged", False):
                    exc.stage = stage
                    exc._tagged = True
                raise

        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner

    return wrap


@_stage("forward")
def stage_forward(cfg: RunConfig, man: Manifest):
    if cfg.scenario is None:
        raise InvalidInputError("forward needs --scenario")
    scenario, defaults = parse_scenario(_resolve_scenario_path(cfg.scenario))
    m = cfg.m if cfg.m is not None else int(defaults.get("m", 8))
    ms = forward_measurements(scenario, m)
    ms = apply_noise(ms, cfg.noise, cfg.seed)
    path = cfg.out / "measurements.json"
    ms.save(path)
    man.add("measurements", path)
    man.diagnostics["forward"] = {"m": m, "scenario": scenario.digest, "scenario_name": scenario.name,
                                  "block_condition": ms.provenance.get("block_condition"),
                                  "flux_residual": ms.provenance.get("flux_residual"),
                                  "noise_level": cfg.noise, "seed": cfg.seed}
    return ms, defaults


def _load_measurements(path) -> MeasurementSet:
    try:
        return MeasurementSet.load(path)
    except OSError as exc:
        raise ParseError(f"cannot read measurements {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, StokesMomentsError):
            raise
        raise ParseError(f"{path}: malformed measurement file ({exc})") from exc


def _load_moments(path) -> MomentTable:
    try:
        return MomentTable.load(path)
    except OSError as exc:
        raise ParseError(f"cannot read moment table {path}: {exc.strerror}") from exc


def _load_prony(path) -> PronySolution:
    try:
        return PronySolution.load(path)
    except OSError as exc:
        raise ParseError(f"cannot read Prony solution {path}: {exc.strerror}") from exc


@_stage("moments")
def stage_moments(cfg: RunConfig, man: Manifest, ms: MeasurementSet | None = None) -> MomentTable:
    if ms is None:
        if cfg.input is None:
            raise InvalidInputError("moments needs --input measurements.json")
        ms = _load_measurements(cfg.input)
    table = moment_matrix(ms)
    path = cfg.out / "moments.csv"
    table.save(path)
    man.add("moments", path)
    eig = np.linalg.eigvalsh(table.matrix)
    man.diagnostics["moments"] = {
        "m": table.m, "area": table.area,
        "cond_V": table.provenance.get("cond_V"), "cond_X": table.provenance.get("cond_X"),
        "hermitian_residual": table.provenance.get("hermitian_residual"),
        "min_eigenvalue": float(eig.min()), "max_eigenvalue": float(eig.max()),
    }
    return table


def _grid_size(cfg: RunConfig, defaults: dict, fallback: int) -> int:
    return cfg.grid if cfg.grid is not None else int(defaults.get("grid", fallback))


@_stage("bergman")
def stage_bergman(cfg: RunConfig, man: Manifest, table: MomentTable | None = None, defaults=None):
    defaults = defaults or {}
    if table is None:
        if cfg.input is None:
            raise InvalidInputError("bergman needs --input moments.csv")
        table = _load_moments(cfg.input)
    basis = bergman_coeffs(table)
    spec = GridSpec.square(_grid_size(cfg, defaults, 512))
    levels = cfg.lambda_levels or tuple(defaults.get("lambda_levels", DEFAULT_LEVELS))
    grid = theta_grid(basis, spec)
    contours = theta_contours(basis, spec, levels, grid=grid)
    cpath = cfg.out / "bergman_contours.csv"
    write_contours_csv(contours, cpath)
    gpath = cfg.out / "theta_grid.npy"
    np.save(gpath, grid.values)
    bpath = cfg.out / "bergman_basis.json"
    bpath.write_text(json.dumps(_jsonable({
        "format": "stokesmoments.bergman/1",
        "degree": basis.degree,
        "coefficients": [[[c.real, c.imag] for c in row] for row in basis.coeffs],
        "grid": spec.to_dict(),
        "diagnostics": basis.diagnostics,
    }), indent=2, sort_keys=True) + "\n")
    for name, p in (("bergman_contours", cpath), ("theta_grid", gpath), ("bergman_basis", bpath)):
        man.add(name, p)
    man.diagnostics["bergman"] = {**basis.diagnostics, "levels": list(levels), "contours": len(contours),
                                  "grid": spec.nx}
    return basis, contours


@_stage("prony")
def stage_prony(cfg: RunConfig, man: Manifest, table: MomentTable | None = None, defaults=None) -> PronySolution:
    defaults = defaults or {}
    if table is None:
        if cfg.input is None:
            raise InvalidInputError("prony needs --input moments.csv")
        table = _load_moments(cfg.input)
    n = cfg.n_prony if cfg.n_prony is not None else defaults.get("n_prony")
    if n is None:
        raise InvalidInputError("prony needs --n-prony")
    n = int(n)
    available = table.matrix.shape[1]
    if 2 * n > available:
        raise InvalidInputError(f"n-prony {n} needs {2 * n} harmonic moments, the table has {available}")
    sol = prony_solve(table.harmonic, n)
    path = cfg.out / "prony.json"
    sol.save(path)
    man.add("prony", path)
    man.diagnostics["prony"] = {k: v for k, v in sol.diagnostics.items() if k != "singular_values"}
    man.diagnostics["prony"]["nodes"] = sol.nodes
    man.diagnostics["prony"]["weights"] = sol.weights.real
    return sol


@_stage("balayage")
def stage_balayage(cfg: RunConfig, man: Manifest, sol: PronySolution | None = None, defaults=None):
    defaults = defaults or {}
    if sol is None:
        if cfg.input is None:
            raise InvalidInputError("balayage needs --input prony.json")
        sol = _load_prony(cfg.input)
    spec = GridSpec.square(_grid_size(cfg, defaults, 256))
    ind = balayage(sol.nodes, sol.weights, spec, tol=cfg.tol)
    ppath = cfg.out / "indicator.pgm"
    write_pgm(ind, ppath)
    cpath = cfg.out / "indicator_contours.csv"
    write_indicator_csv(ind.contours, cpath)
    man.add("indicator", ppath)
    man.add("indicator_contours", cpath)
    man.diagnostics["balayage"] = {**ind.diagnostics, "area": ind.area, "grid": spec.nx}
    return ind


def run(cfg: RunConfig) -> Manifest:
    """Execute one subcommand; the manifest is written even when a stage fails."""
    cfg.validate()
    cfg.out.mkdir(parents=True, exist_ok=True)
    man = Manifest(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            if cfg.subcommand == "forward":
                stage_forward(cfg, man)
            elif cfg.subcommand == "moments":
                stage_moments(cfg, man)
            elif cfg.subcommand == "bergman":
                stage_bergman(cfg, man)
            elif cfg.subcommand == "prony":
                stage_prony(cfg, man)
            elif cfg.subcommand == "balayage":
                stage_balayage(cfg, man)
            else:
                run_pipeline(cfg, man)
        except StokesMomentsError as exc:
            man.status = "error"
            man.error = {"stage": exc.stage, "type": type(exc).__name__, "message": str(exc),
                         "exit_code": exc.exit_code}
            raise
        finally:
            man.warnings = [f"{w.category.__name__}: {w.message}" for w in caught]
            for w in man.warnings:
                log.warning(w)
            man.write()
    return man


def run_pipeline(cfg: RunConfig, man: Manifest) -> None:
    ms, defaults = stage_forward(cfg, man)
    if cfg.n_prony is None and "n_prony" in defaults:
        n = int(defaults["n_prony"])
        if 2 * n > ms.m - 1:
            raise InvalidInputError(f"scenario n_prony {n} exceeds (m - 1) / 2 for m = {ms.m}")
    table = stage_moments(cfg, man, ms)
    if table.area <= 1e-8:
        # no obstacle mass: nothing to orthonormalize, Prony order 0
        man.diagnostics["bergman"] = {"skipped": "moment matrix vanishes"}
    else:
        stage_bergman(cfg, man, table, defaults)
    sol = stage_prony(cfg, man, table, defaults)
    stage_balayage(cfg, man, sol, defaults)


# ---------------------------------------------------------------------------
# argument parsing


def _levels(text: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from exc
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("levels must be positive numbers")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stokesmoments", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        return p

    def scenario_opts(p):
        p.add_argument("--scenario", required=True,
                       help="scenario JSON file or bundled name (example1, example2, example3, empty)")
        p.add_argument("--m", type=int, help="probe count parameter (2m - 1 measurements)")
        p.add_argument("--noise", type=float, default=0.0, help="relative noise level on the measurements")
        p.add_argument("--seed", type=int, default=0, help="seed of the noise generator")

    p = common(sub.add_parser("forward", help="simulate measurements for a scenario"))
    scenario_opts(p)
    p = common(sub.add_parser("moments", help="moment matrix from measurements.json"))
    p.add_argument("--input", required=True)
    p = common(sub.add_parser("bergman", help="Theta level sets from moments.csv"))
    p.add_argument("--input", required=True)
    p.add_argument("--grid", type=int)
    p.add_argument("--lambda-levels", type=_levels)
    p = common(sub.add_parser("prony", help="Prony nodes and weights from moments.csv"))
    p.add_argument("--input", required=True)
    p.add_argument("--n-prony", type=int, required=True)
    p = common(sub.add_parser("balayage", help="quadrature domain from prony.json"))
    p.add_argument("--input", required=True)
    p.add_argument("--grid", type=int)
    p.add_argument("--tol", type=float, default=1e-9)
    p = common(sub.add_parser("pipeline", help="all stages end to end"))
    scenario_opts(p)
    p.add_argument("--n-prony", type=int)
    p.add_argument("--grid", type=int)
    p.add_argument("--lambda-levels", type=_levels)
    p.add_argument("--tol", type=float, default=1e-9)
    return parser


def config_from_args(args) -> RunConfig:
    return RunConfig(
        subcommand=args.subcommand, out=args.out,
        scenario=getattr(args, "scenario", None), input=getattr(args, "input", None),
        m=getattr(args, "m", None), n_prony=getattr(args, "n_prony", None),
        grid=getattr(args, "grid", None), noise=getattr(args, "noise", 0.0),
        seed=getattr(args, "seed", 0), lambda_levels=getattr(args, "lambda_levels", None),
        tol=getattr(args, "tol", 1e-9),
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        man = run(config_from_args(args))
    except StokesMomentsError as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return exc.exit_code
    print(json.dumps(sorted(man.artifacts)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
