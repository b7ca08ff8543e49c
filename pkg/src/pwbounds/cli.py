"""
Command line front end: reference solutions, bounded SCF traces and cutoff sweeps.

    pwbounds reference CONFIG      converge the reference problem and cache it
    pwbounds bounds CONFIG         bounded SCF run, per-iteration CSV + JSON summary
    pwbounds sweep CONFIG --ecut   one bounded run per cutoff, aggregated CSV
    pwbounds gen-potential CONFIG  Fourier coefficients of the external potential

Exit codes: 0 success, 2 configuration error, 3 SCF not converged,
4 reference solution missing.

Reference artifacts live in $PWBOUNDS_CACHE_DIR (falling back to the config's
output.cache_dir, then ./.pwbounds-cache), one directory per config digest:

    meta.json         format version, digest, energy, SCF metadata, array index
    density.npy       (n_G, 2) little-endian float64: Re, Im of the density
                      coefficients on the potential basis, in basis order
    eigenvalues.npy   (n_k, n_el + 1) little-endian float64

The .npy header carries dtype '<f8' and the shape, so any reader of the NumPy
format can load the arrays without this package.
"""

import argparse
import copy
import csv
import datetime
import hashlib
import io
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .pw_basis import Lattice
from .linear_solver import DegenerateFermiError
from .estimators import VARIANTS, fiber_bounds
from .kpoints import Discretization
from .model import FUNCTIONALS, DIRAC_EXCHANGE, ModelSpec, potential_from_descriptor
from .scf import ScfConfig, ScfNotConverged, run_scf

__all__ = [
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_NOT_CONVERGED",
    "EXIT_NO_REFERENCE",
    "CACHE_ENV",
    "TRACE_VERSION",
    "ConfigError",
    "MissingReference",
    "RunConfig",
    "ReferenceSolution",
    "config_digest",
    "cmd_reference",
    "cmd_bounds",
    "cmd_sweep",
    "cmd_gen_potential",
    "trace_columns",
    "main",
]

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_NO_REFERENCE = 4

CACHE_ENV = "PWBOUNDS_CACHE_DIR"
CONFIG_VERSION = 1
ARTIFACT_VERSION = 1
TRACE_VERSION = 1
REFERENCE_DENSITY_TOL = 1e-11


class ConfigError(ValueError):
    pass


class MissingReference(FileNotFoundError):
    pass


class NotConverged(RuntimeError):
    pass


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if x is None:
        return "nan"
    return format(float(x), ".17g")


@dataclass
class RunConfig:
    """
    Everything that defines one experiment.

    Attributes:
        lattice: rows are lattice vectors (Bohr).
        n_el: electrons per unit cell.
        potential: external potential descriptor (see potential_from_descriptor).
        functional: "linear", "rhf" or "rhf_xalpha".
        xalpha_coefficient: C_alpha for "rhf_xalpha".
        ecut, ecut_ref: computational and reference cutoffs (Hartree).
        kgrid: k-points per reciprocal direction.
        scf: ScfConfig fields.
        variants: estimator variants to evaluate.
        shift: fixed shift of A, or None for max(0, 0.1 - lambda_1).
        gshift_target: q aimed at by eta0_g / eta1_g.
        gap_denominator: "printed" or "next" (operator-norm middle term).
        output_dir, prefix, cache_dir: output locations.
    """

    lattice: list
    n_el: int
    potential: dict
    functional: str = "rhf"
    xalpha_coefficient: float = DIRAC_EXCHANGE
    ecut: float = 400.0
    ecut_ref: float = 1000.0
    kgrid: list = None
    scf: dict = field(default_factory=dict)
    variants: list = field(default_factory=lambda: list(VARIANTS))
    shift: float = None
    gshift_target: float = 0.5
    gap_denominator: str = "printed"
    output_dir: str = "."
    prefix: str = "run"
    cache_dir: str = None

    def __post_init__(self):
        try:
            self.lattice = np.atleast_2d(np.asarray(self.lattice, dtype=float)).tolist()
            Lattice(np.array(self.lattice))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"model.lattice: {exc}") from exc
        if self.functional not in FUNCTIONALS:
            raise ConfigError(f"model.functional must be one of {FUNCTIONALS}")
        if not isinstance(self.n_el, int) or self.n_el < 1:
            raise ConfigError("model.n_el must be a positive integer")
        if not isinstance(self.potential, dict) or "kind" not in self.potential:
            raise ConfigError("model.potential must be a descriptor with a 'kind'")
        if not 0 < self.ecut < self.ecut_ref:
            raise ConfigError("need 0 < discretization.ecut < discretization.ecut_ref")
        dim = len(self.lattice)
        if self.kgrid is None:
            self.kgrid = [1] * dim
        self.kgrid = [int(k) for k in np.atleast_1d(self.kgrid)]
        if len(self.kgrid) != dim or min(self.kgrid) < 1:
            raise ConfigError(f"discretization.kgrid needs {dim} positive entries")
        unknown = set(self.variants) - set(VARIANTS)
        if unknown or not self.variants:
            raise ConfigError(f"estimators.variants must be a nonempty subset of {VARIANTS}")
        self.variants = [v for v in VARIANTS if v in self.variants]
        if self.gap_denominator not in ("printed", "next"):
            raise ConfigError("estimators.gap_denominator must be 'printed' or 'next'")
        if not 0 < self.gshift_target < 1:
            raise ConfigError("estimators.gshift_target must lie in (0, 1)")
        try:
            self.scf_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"scf: {exc}") from exc

    # --- nested document <-> dataclass --------------------------------------

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        version = doc.get("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {version}")
        known = {"version", "model", "discretization", "scf", "estimators", "output"}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config sections {sorted(extra)}")
        model = doc.get("model", {})
        disc = doc.get("discretization", {})
        est = doc.get("estimators", {})
        out = doc.get("output", {})
        try:
            return cls(
                lattice=model["lattice"],
                n_el=model["n_el"],
                potential=model["potential"],
                functional=model.get("functional", "rhf"),
                xalpha_coefficient=model.get("xalpha_coefficient", DIRAC_EXCHANGE),
                ecut=float(disc.get("ecut", 400.0)),
                ecut_ref=float(disc.get("ecut_ref", 1000.0)),
                kgrid=disc.get("kgrid"),
                scf=dict(doc.get("scf", {})),
                variants=list(est.get("variants", VARIANTS)),
                shift=est.get("shift"),
                gshift_target=float(est.get("gshift_target", 0.5)),
                gap_denominator=est.get("gap_denominator", "printed"),
                output_dir=out.get("dir", "."),
                prefix=out.get("prefix", "run"),
                cache_dir=out.get("cache_dir"),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config key {exc}") from exc
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def to_dict(self):
        return {
            "version": CONFIG_VERSION,
            "model": {
                "lattice": self.lattice,
                "n_el": self.n_el,
                "functional": self.functional,
                "xalpha_coefficient": self.xalpha_coefficient,
                "potential": self.potential,
            },
            "discretization": {"ecut": self.ecut, "ecut_ref": self.ecut_ref, "kgrid": self.kgrid},
            "scf": self.scf_config().to_dict(),
            "estimators": {
                "variants": list(self.variants),
                "shift": self.shift,
                "gshift_target": self.gshift_target,
                "gap_denominator": self.gap_denominator,
            },
            "output": {"dir": self.output_dir, "prefix": self.prefix, "cache_dir": self.cache_dir},
        }

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        return cls.from_dict(doc)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    # --- objects -------------------------------------------------------------

    def scf_config(self, **overrides):
        params = dict(self.scf)
        params.update(overrides)
        return ScfConfig(**params)

    def with_ecut(self, ecut):
        other = copy.deepcopy(self)
        other.ecut = float(ecut)
        other.__post_init__()
        return other

    def build(self):
        """(model, discretization) of the computational problem."""
        lattice = Lattice(np.array(self.lattice))
        disc = Discretization.build(lattice, self.ecut, self.ecut_ref, kgrid=tuple(self.kgrid))
        try:
            external = potential_from_descriptor(self.potential, disc.potential_basis)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"model.potential: {exc}") from exc
        model = ModelSpec(lattice, self.n_el, external, self.functional, self.xalpha_coefficient)
        return model, disc

    def cache_root(self):
        env = os.environ.get(CACHE_ENV)
        if env:
            return Path(env)
        if self.cache_dir:
            return Path(self.cache_dir)
        return Path(".pwbounds-cache")


def _reference_document(cfg):
    # Only what determines the reference solution enters the digest.
    doc = cfg.to_dict()
    scf = cfg.scf_config(density_tol=REFERENCE_DENSITY_TOL).to_dict()
    return {
        "model": doc["model"],
        "ecut_ref": cfg.ecut_ref,
        "kgrid": cfg.kgrid,
        "scf": scf,
    }


def config_digest(cfg):
    """SHA-256 of the canonical JSON of everything the reference depends on."""
    blob = json.dumps(_reference_document(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(eq=False)
class ReferenceSolution:
    """
    Converged solution in the reference space.

    Attributes:
        digest: config_digest of the producing config.
        energy: E(gamma_star).
        eigenvalues: (n_k, n_el + 1) eigenvalues of the converged Hamiltonian.
        density: (n_G,) complex density coefficients on the potential basis.
        iterations, final_residual: SCF metadata.
    """

    digest: str
    energy: float
    eigenvalues: np.ndarray
    density: np.ndarray
    iterations: int
    final_residual: float

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        dens = np.ascontiguousarray(np.stack([self.density.real, self.density.imag], axis=1), dtype="<f8")
        np.save(directory / "density.npy", dens)
        np.save(directory / "eigenvalues.npy", np.ascontiguousarray(self.eigenvalues, dtype="<f8"))
        meta = {
            "format": "pwbounds-reference",
            "version": ARTIFACT_VERSION,
            "digest": self.digest,
            "energy": self.energy,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "arrays": {
                "density": {"file": "density.npy", "dtype": "<f8", "shape": list(dens.shape),
                            "layout": "rows are basis G-vectors; columns Re, Im"},
                "eigenvalues": {"file": "eigenvalues.npy", "dtype": "<f8",
                                "shape": list(self.eigenvalues.shape)},
            },
        }
        (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        meta_path = directory / "meta.json"
        if not meta_path.exists():
            raise MissingReference(f"no reference artifact in {directory}")
        meta = json.loads(meta_path.read_text())
        if meta.get("version") != ARTIFACT_VERSION:
            raise MissingReference(f"unsupported reference artifact version {meta.get('version')}")
        dens = np.load(directory / "density.npy")
        eigs = np.load(directory / "eigenvalues.npy")
        return cls(
            meta["digest"],
            float(meta["energy"]),
            eigs,
            dens[:, 0] + 1j * dens[:, 1],
            int(meta["iterations"]),
            float(meta["final_residual"]),
        )


def reference_path(cfg):
    return cfg.cache_root() / config_digest(cfg)


def cmd_reference(cfg, force=False):
    """
    Converge the SCF in the reference space to 1e-11 and persist the result.

    Returns:
        (ReferenceSolution, cache_hit).

    Raises:
        NotConverged: no artifact is written.
    """
    path = reference_path(cfg)
    digest = config_digest(cfg)
    if not force and (path / "meta.json").exists():
        ref = ReferenceSolution.load(path)
        if ref.digest == digest:
            log.info("reference cache hit %s", path)
            return ref, True
    model, disc = cfg.build()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScfNotConverged)
        history = run_scf(model, disc.reference(), cfg.scf_config(density_tol=REFERENCE_DENSITY_TOL))
    if not history.converged:
        raise NotConverged(history.warnings[-1])
    last = history.last
    eigs = np.array([s.unshifted_eigenvalues[: model.n_el + 1] for s in last.probe])
    ref = ReferenceSolution(digest, float(last.energy), eigs, last.density.coeffs.copy(),
                            len(history), float(history.final_residual))
    ref.save(path)
    return ref, False


def load_reference(cfg):
    path = reference_path(cfg)
    ref = ReferenceSolution.load(path)
    if ref.digest != config_digest(cfg):
        raise MissingReference(f"reference in {path} was produced by a different config")
    return ref


def trace_columns(variants):
    """Versioned column order of the per-iteration CSV."""
    cols = ["m", "energy", "true_error", "err_scf"]
    cols += [f"err_disc_{v}" for v in variants]
    cols += [f"shift_{v}" for v in variants]
    cols += [f"opnorm_bound_{v}" for v in variants]
    cols += [f"guaranteed_{v}" for v in variants]
    return cols


def bounded_run(cfg, reference_energy):
    """
    Bounded SCF in the computational space.

    Returns:
        (history, rows) with rows as dicts keyed by trace_columns.
    """
    model, disc = cfg.build()
    variants = cfg.variants

    def hook(record, history):
        return fiber_bounds(
            model, disc.fibers, record.probe, record.orbitals, record.potential,
            variants=variants, shift=cfg.shift, gshift_target=cfg.gshift_target,
            gap_denominator=cfg.gap_denominator,
        )

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScfNotConverged)
        history = run_scf(model, disc, cfg.scf_config(), hook)
    rows = []
    for rec in history.records:
        reports = rec.bounds
        err_scf = next((reports[v].err_scf for v in variants if math.isfinite(reports[v].err_scf)),
                       float("nan"))
        row = {"m": rec.m, "energy": rec.energy, "true_error": rec.energy - reference_energy,
               "err_scf": err_scf}
        for v in variants:
            row[f"err_disc_{v}"] = reports[v].err_disc
            row[f"shift_{v}"] = reports[v].shift_used
            row[f"opnorm_bound_{v}"] = reports[v].opnorm_bound
            row[f"guaranteed_{v}"] = reports[v].guaranteed
        rows.append(row)
    return history, rows


def write_trace(path, rows, columns, header=None):
    buf = io.StringIO()
    if header is None:
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        header = f"# pwbounds {__version__} trace v{TRACE_VERSION} generated {stamp}"
    buf.write(header + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([row["m"] if c == "m" else _fmt(row[c]) for c in columns])
    Path(path).write_text(buf.getvalue())


def read_trace(path):
    """Rows of a trace CSV as dicts of floats (header comment skipped)."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(lines)]


def crossover_iteration(rows, variant):
    """First m with err_disc > err_scf, or None."""
    for row in rows:
        if row[f"err_disc_{variant}"] > row["err_scf"]:
            return int(row["m"])
    return None


def summarize(cfg, history, rows, reference):
    last = rows[-1]
    ratios = {}
    for v in cfg.variants:
        bound = last["err_scf"] + last[f"err_disc_{v}"]
        ratios[v] = bound / last["true_error"] if last["true_error"] != 0 else None
    return {
        "trace_version": TRACE_VERSION,
        "reference_digest": reference.digest,
        "reference_energy": reference.energy,
        "converged": history.converged,
        "iterations": len(history),
        "final_residual": history.final_residual,
        "final_energy": last["energy"],
        "final_true_error": last["true_error"],
        "final_ratios": ratios,
        "crossover_iteration": {v: crossover_iteration(rows, v) for v in cfg.variants},
        "guarantee_violations": {
            v: [int(r["m"]) for r in rows
                if r[f"guaranteed_{v}"] and r["true_error"] > r["err_scf"] + r[f"err_disc_{v}"] + 1e-9]
            for v in cfg.variants
        },
        "warnings": history.warnings,
    }


def cmd_bounds(cfg, header=None):
    """
    Bounded SCF run against the cached reference.

    Writes <dir>/<prefix>_trace.csv and <dir>/<prefix>_summary.json.

    Returns:
        (summary, rows).

    Raises:
        MissingReference: run `reference` first.
    """
    reference = load_reference(cfg)
    history, rows = bounded_run(cfg, reference.energy)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace(out / f"{cfg.prefix}_trace.csv", rows, trace_columns(cfg.variants), header)
    summary = summarize(cfg, history, rows, reference)
    (out / f"{cfg.prefix}_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary, rows


def sweep_columns(variants):
    return ["ecut", "iterations", "converged", "energy", "true_error", "err_scf"] + [
        f"err_disc_{v}" for v in variants
    ]


def cmd_sweep(cfg, ecuts, header=None):
    """
    One bounded run per cutoff, sharing the reference at cfg.ecut_ref.

    Writes the per-run traces and <dir>/<prefix>_sweep.csv.

    Returns:
        list of aggregated rows.
    """
    reference = load_reference(cfg)
    rows = []
    for ecut in ecuts:
        sub = cfg.with_ecut(ecut)
        sub.prefix = f"{cfg.prefix}_ecut{_fmt(ecut)}"
        summary, trace = cmd_bounds(sub, header)
        last = trace[-1]
        row = {"ecut": float(ecut), "iterations": summary["iterations"],
               "converged": summary["converged"], "energy": last["energy"],
               "true_error": last["energy"] - reference.energy, "err_scf": last["err_scf"]}
        for v in cfg.variants:
            row[f"err_disc_{v}"] = last[f"err_disc_{v}"]
        rows.append(row)
    cols = sweep_columns(cfg.variants)
    buf = io.StringIO()
    if header is None:
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        header = f"# pwbounds {__version__} sweep v{TRACE_VERSION} generated {stamp}"
    buf.write(header + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([row[c] if c == "iterations" else _fmt(row[c]) for c in cols])
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{cfg.prefix}_sweep.csv").write_text(buf.getvalue())
    return rows


def cmd_gen_potential(cfg, stream=None):
    """
    Write the external potential's Fourier coefficients on the potential basis
    as CSV: Miller indices, |G|, Re V_G, Im V_G.
    """
    model, disc = cfg.build()
    basis = disc.potential_basis
    stream = stream or sys.stdout
    writer = csv.writer(stream, lineterminator="\n")
    dim = basis.dimension
    writer.writerow([f"n{j + 1}" for j in range(dim)] + ["norm_G", "re", "im"])
    norms = np.linalg.norm(basis.gvectors, axis=1)
    coeffs = model.external.field.coeffs
    for miller, g, c in zip(basis.miller, norms, coeffs):
        writer.writerow([int(n) for n in miller] + [_fmt(g), _fmt(c.real), _fmt(c.imag)])


def _parser():
    parser = argparse.ArgumentParser(
        prog="pwbounds",
        description="Guaranteed energy error bounds for planewave reduced Hartree-Fock.",
    )
    parser.add_argument("--version", action="version", version=f"pwbounds {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reference", help="converge and cache the reference solution")
    p.add_argument("config")
    p.add_argument("--force", action="store_true", help="recompute even on a cache hit")

    p = sub.add_parser("bounds", help="bounded SCF run, CSV trace and JSON summary")
    p.add_argument("config")
    p.add_argument("--output-dir")

    p = sub.add_parser("sweep", help="bounded runs over several cutoffs")
    p.add_argument("config")
    p.add_argument("--ecut", type=float, nargs="+", required=True)
    p.add_argument("--output-dir")

    p = sub.add_parser("gen-potential", help="print the external potential's coefficients")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="CSV file (default: stdout)")
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if getattr(args, "output_dir", None):
            cfg.output_dir = args.output_dir
        if args.command == "reference":
            ref, hit = cmd_reference(cfg, force=args.force)
            state = "cache hit" if hit else "computed"
            print(f"reference {state}: E = {ref.energy:.15g} ({reference_path(cfg)})")
        elif args.command == "bounds":
            summary, _ = cmd_bounds(cfg)
            print(json.dumps(summary["final_ratios"], indent=2))
            if not summary["converged"]:
                print(summary["warnings"][-1], file=sys.stderr)
                return EXIT_NOT_CONVERGED
        elif args.command == "sweep":
            rows = cmd_sweep(cfg, args.ecut)
            if not all(r["converged"] for r in rows):
                print("some runs did not converge", file=sys.stderr)
                return EXIT_NOT_CONVERGED
        elif args.command == "gen-potential":
            if args.output:
                with open(args.output, "w", newline="") as fh:
                    cmd_gen_potential(cfg, fh)
            else:
                cmd_gen_potential(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingReference as exc:
        print(f"{exc}; run `pwbounds reference` first", file=sys.stderr)
        return EXIT_NO_REFERENCE
    except (NotConverged, DegenerateFermiError) as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
