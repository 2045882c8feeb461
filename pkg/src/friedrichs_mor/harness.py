"""Experiment definitions, orchestration and CSV output.

Configurations are YAML documents with the sections ``test_case``,
``geometry``, ``coefficients``, ``training``, ``evaluation`` and ``output``.
Unknown keys are rejected. Lengths may be given as numbers or as fraction
strings such as ``"1/30"``.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml

from friedrichs_mor.assembly import ChannelPattern, check_friedrichs_positivity, sample_coefficients
from friedrichs_mor.exceptions import ConfigError, EmptyBasis
from friedrichs_mor.grid import Rect, build_pair
from friedrichs_mor.linalg import RNG_ALGORITHM, GaussianStream
from friedrichs_mor.rangefinder import (
    ProjectionErrors,
    RangeApproximation,
    TrainingConfig,
    adaptive_range,
    evaluation_samples,
    oracle,
    projection_errors,
)
from friedrichs_mor.transfer import DEFAULT_MATRIX_CAP, TransferSystem, build_transfer, caccioppoli_ratio, shifted_solution

logger = logging.getLogger(__name__)

TEST_CASES = ("pure_diffusion", "full_cdr_parallel", "full_cdr_lattice", "custom")
CHANNEL_CENTERS = (-2 / 3, -1 / 3, 1 / 3, 2 / 3, 4 / 3, 5 / 3)
CHANNEL_HALF_WIDTH = 0.04
DEFAULT_CONTRAST = 1e2
CACCIOPPOLI_STREAM = 4


def channel_geometry(kind: str, contrast: float = DEFAULT_CONTRAST) -> ChannelPattern:
    """High-conductivity channels on ``[-1, 2]^2``: diffusion ``contrast`` inside, 1 outside.

    ``parallel`` gives six horizontal bands, ``lattice`` adds the matching vertical bands.
    Use :meth:`ChannelPattern.with_values` for the reaction pattern.
    """
    axes = {"parallel": {"horizontal"}, "lattice": {"horizontal", "vertical"}}
    if kind not in axes:
        raise ConfigError(f"unknown channel geometry {kind!r}")
    return ChannelPattern(axes[kind], CHANNEL_CENTERS, CHANNEL_HALF_WIDTH, float(contrast), 1.0)


def parse_length(value) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"not a length: {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError) as err:
            raise ConfigError(f"cannot parse length {value!r}") from err
    raise ConfigError(f"not a length: {value!r}")


def _section(data, name, allowed):
    section = data.get(name) or {}
    if not isinstance(section, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {sorted(unknown)}")
    return section


def _coefficient_value(value, where):
    if isinstance(value, dict):
        unknown = set(value) - {"channels"}
        if unknown or "channels" not in value:
            raise ConfigError(f"{where}: expected a number or a mapping with key 'channels'")
        spec = value["channels"]
        allowed = {"axes", "centers", "half_width", "inside", "outside"}
        if not isinstance(spec, dict) or set(spec) - allowed or not allowed <= set(spec):
            raise ConfigError(f"{where}.channels needs exactly the keys {sorted(allowed)}")
        try:
            return ChannelPattern(frozenset(spec["axes"]), tuple(parse_length(c) for c in spec["centers"]),
                                  parse_length(spec["half_width"]), float(spec["inside"]), float(spec["outside"]))
        except (TypeError, ValueError) as err:
            raise ConfigError(f"{where}: {err}") from err
    try:
        return float(value)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}: not a number: {value!r}") from err


@dataclass(frozen=True)
class ExperimentConfig:
    test_case: str = "pure_diffusion"
    interior: tuple = (0.0, 0.0, 1.0, 1.0)
    delta: float = 1.0
    h: float = 1 / 30
    diffusion: object = 1.0
    convection: tuple = (0.0, 0.0)
    reaction: object = 0.0
    contrast: float = DEFAULT_CONTRAST
    training: TrainingConfig = field(default_factory=TrainingConfig)
    n_eval: int = 20
    compute_oracle: bool = True
    matrix_cap: int = DEFAULT_MATRIX_CAP
    out_dir: str = "out"
    prefix: str | None = None

    def __post_init__(self):
        if self.test_case not in TEST_CASES:
            raise ConfigError(f"unknown test case {self.test_case!r}; expected one of {TEST_CASES}")
        if int(self.n_eval) != self.n_eval or self.n_eval < 0:
            raise ConfigError("n_eval must be a non-negative integer")
        if not self.contrast > 0:
            raise ConfigError("contrast must be positive")
        if len(self.interior) != 4 or len(self.convection) != 2:
            raise ConfigError("interior needs 4 coordinates and convection 2 components")

    @property
    def interior_rect(self) -> Rect:
        return Rect(*self.interior)

    @property
    def file_prefix(self) -> str:
        if self.prefix:
            return self.prefix
        return f"{self.test_case}_delta{self.delta:g}_h{self.h:.6g}_seed{self.training.seed}"

    def coefficient_spec(self):
        """``(diffusion, convection, reaction)`` for :func:`sample_coefficients`."""
        if self.test_case == "pure_diffusion":
            return 1.0, (0.0, 0.0), 0.0
        if self.test_case in ("full_cdr_parallel", "full_cdr_lattice"):
            pattern = channel_geometry(self.test_case.rsplit("_", 1)[1], self.contrast)
            return pattern, (1.0, 1.0), pattern.with_values(0.0, 1.0)
        return self.diffusion, tuple(self.convection), self.reaction

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        top = {"test_case", "geometry", "coefficients", "training", "evaluation", "output"}
        unknown = set(data) - top
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        kwargs = {}
        if "test_case" in data:
            kwargs["test_case"] = data["test_case"]
        geometry = _section(data, "geometry", {"interior", "delta", "h"})
        if "interior" in geometry:
            kwargs["interior"] = tuple(parse_length(v) for v in geometry["interior"])
        for key in ("delta", "h"):
            if key in geometry:
                kwargs[key] = parse_length(geometry[key])
        coefficients = _section(data, "coefficients", {"diffusion", "convection", "reaction", "contrast"})
        if coefficients and data.get("test_case") == "pure_diffusion":
            raise ConfigError("pure_diffusion has fixed coefficients; use test_case 'custom'")
        for key in ("diffusion", "reaction"):
            if key in coefficients:
                kwargs[key] = _coefficient_value(coefficients[key], f"coefficients.{key}")
        if "convection" in coefficients:
            kwargs["convection"] = tuple(float(v) for v in coefficients["convection"])
        if "contrast" in coefficients:
            kwargs["contrast"] = float(coefficients["contrast"])
        training = _section(data, "training", {"tol", "n_test", "eps_fail", "max_basis", "seed", "c_est"})
        try:
            kwargs["training"] = TrainingConfig(**{k: (float(v) if k in ("tol", "eps_fail", "c_est")
                                                       and v is not None else v)
                                                   for k, v in training.items()})
        except (TypeError, ValueError) as err:
            raise ConfigError(f"training: {err}") from err
        evaluation = _section(data, "evaluation", {"n_eval", "oracle", "matrix_cap"})
        if "n_eval" in evaluation:
            kwargs["n_eval"] = evaluation["n_eval"]
        if "oracle" in evaluation:
            kwargs["compute_oracle"] = bool(evaluation["oracle"])
        if "matrix_cap" in evaluation:
            kwargs["matrix_cap"] = int(evaluation["matrix_cap"])
        output = _section(data, "output", {"directory", "prefix"})
        if "directory" in output:
            kwargs["out_dir"] = str(output["directory"])
        if "prefix" in output:
            kwargs["prefix"] = str(output["prefix"])
        return cls(**kwargs)

    def with_overrides(self, seed=None, out_dir=None, max_basis=None, delta=None, h=None) -> "ExperimentConfig":
        training = self.training
        if seed is not None:
            training = replace(training, seed=seed)
        if max_basis is not None:
            training = replace(training, max_basis=max_basis)
        changes = {"training": training}
        if out_dir is not None:
            changes["out_dir"] = str(out_dir)
        if delta is not None:
            changes["delta"] = delta
        if h is not None:
            changes["h"] = h
        return replace(self, **changes)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: {err}") from err
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from err
    return ExperimentConfig.from_dict(data or {})


def build_system(cfg: ExperimentConfig) -> TransferSystem:
    pair = build_pair(cfg.interior_rect, cfg.delta, cfg.h)
    diffusion, convection, reaction = cfg.coefficient_spec()
    try:
        coeff = sample_coefficients(pair.grid, diffusion, convection, reaction)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    report = check_friedrichs_positivity(coeff)
    if report.semi_definite:
        logger.info("positivity holds only with epsilon = 0 (%s)", report)
    return build_transfer(pair, coeff)


# ---------------------------------------------------------------- CSV output

def _fmt(value: float) -> str:
    # repr of a Python float is the shortest round-trip decimal
    return repr(float(value))


def _write_lines(path: Path, lines) -> None:
    with open(path, "w", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def emit_csv(errors: ProjectionErrors, path) -> Path:
    """Write per-sample errors with columns ``error_dim_N,scalar_error_dim_N,flux_error_dim_N``."""
    n_basis = errors.total.shape[1]
    if n_basis == 0:
        raise EmptyBasis("no basis vectors; refusing to write a header-only error table")
    for family in (errors.total, errors.scalar, errors.flux):
        if not np.all(np.isfinite(family)) or np.any(family < 0):
            raise ValueError("error table entries must be finite and non-negative")
    header = ",".join(f"{name}_dim_{n}" for n in range(1, n_basis + 1)
                      for name in ("error", "scalar_error", "flux_error"))
    rows = []
    for s in range(errors.total.shape[0]):
        rows.append(",".join(f"{_fmt(errors.total[s, n])},{_fmt(errors.scalar[s, n])},{_fmt(errors.flux[s, n])}"
                             for n in range(n_basis)))
    path = Path(path)
    _write_lines(path, [header] + rows)
    return path


def read_error_csv(path) -> dict:
    """Column name to array of per-sample values."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        fields = reader.fieldnames or []
    return {name: np.array([float(r[name]) for r in rows]) for name in fields}


def emit_sigma_csv(sigmas, path) -> Path:
    path = Path(path)
    _write_lines(path, ["k,sigma"] + [f"{k},{_fmt(s)}" for k, s in enumerate(sigmas, start=1)])
    return path


# ---------------------------------------------------------------- experiments

@dataclass
class ExperimentResult:
    config: ExperimentConfig
    approximation: RangeApproximation
    errors: ProjectionErrors | None
    sigmas: np.ndarray | None
    artifacts: dict
    wall_time: float

    @property
    def basis_size(self) -> int:
        return self.approximation.size


class _Artifacts:
    """Tracks written files so that a failed run leaves nothing behind."""

    def __init__(self, directory: Path, prefix: str):
        self.directory = directory
        self.prefix = prefix
        self.paths = {}

    def path(self, key, suffix) -> Path:
        p = self.directory / f"{self.prefix}_{suffix}"
        self.paths[key] = p
        return p

    def remove(self):
        for p in self.paths.values():
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def _summary(cfg: ExperimentConfig, sys: TransferSystem, approx: RangeApproximation, wall_time: float) -> dict:
    return {
        "test_case": cfg.test_case,
        "delta": cfg.delta,
        "h": cfg.h,
        "n_boundary_dofs": sys.n_boundary,
        "n_interior_dofs": sys.n_interior,
        "training": asdict(cfg.training),
        "basis_size": approx.size,
        "reached_max_basis": approx.reached_max_basis,
        "dropped_draws": approx.n_dropped,
        "estimator_trace": approx.training_log,
        "n_eval": cfg.n_eval,
        "rng": RNG_ALGORITHM,
        "wall_time_seconds": wall_time,
    }


def save_basis(path, approx: RangeApproximation) -> None:
    np.savez(path, basis=approx.basis, training_log=np.asarray(approx.training_log),
             sigmas=np.asarray([] if approx.sigmas is None else approx.sigmas),
             provenance=np.asarray(approx.provenance))


def run_experiment(cfg: ExperimentConfig, evaluate: bool = True, sys: TransferSystem | None = None) -> ExperimentResult:
    """Train a local basis and, if ``evaluate``, emit projection errors and oracle singular values.

    Artifacts in ``cfg.out_dir`` (prefix ``cfg.file_prefix``): ``basis.npz``,
    ``summary.json``, ``errors.csv`` (``n_eval > 0``) and ``sigmas.csv``
    (oracle enabled and boundary DOFs within ``matrix_cap``).
    """
    start = time.perf_counter()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = _Artifacts(out, cfg.file_prefix)
    try:
        if sys is None:
            sys = build_system(cfg)
        approx = adaptive_range(sys, cfg.training)
        save_basis(artifacts.path("basis", "basis.npz"), approx)
        errors = sigmas = None
        if evaluate and cfg.n_eval > 0:
            samples = evaluation_samples(sys, cfg.n_eval, cfg.training.seed)
            errors = projection_errors(approx.basis, samples, sys.weighted_gram, sys.interior_space.n_flux)
            emit_csv(errors, artifacts.path("errors", "errors.csv"))
        if evaluate and cfg.compute_oracle and sys.n_boundary <= cfg.matrix_cap:
            sigmas = oracle(sys, cfg.matrix_cap).sigmas
            emit_sigma_csv(sigmas, artifacts.path("sigmas", "sigmas.csv"))
        wall_time = time.perf_counter() - start
        with open(artifacts.path("summary", "summary.json"), "w") as fh:
            json.dump(_summary(cfg, sys, approx, wall_time), fh, indent=2)
    except BaseException:
        artifacts.remove()
        raise
    return ExperimentResult(cfg, approx, errors, sigmas, dict(artifacts.paths), wall_time)


def run_oracle(cfg: ExperimentConfig, sys: TransferSystem | None = None) -> tuple[RangeApproximation, dict]:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = _Artifacts(out, cfg.file_prefix)
    try:
        if sys is None:
            sys = build_system(cfg)
        approx = oracle(sys, cfg.matrix_cap)
        emit_sigma_csv(approx.sigmas, artifacts.path("sigmas", "sigmas.csv"))
        save_basis(artifacts.path("oracle_basis", "oracle_basis.npz"), approx)
    except BaseException:
        artifacts.remove()
        raise
    return approx, dict(artifacts.paths)


def conforming_h(delta: float, h: float, h_overrides: dict | None = None) -> float:
    """Mesh width for ``delta``: an explicit override, else ``h`` itself."""
    if h_overrides:
        for d, hh in h_overrides.items():
            if abs(d - delta) <= 1e-12 * max(1.0, abs(delta)):
                return hh
    return h


def _study_run(cfg: ExperimentConfig):
    result = run_experiment(cfg, evaluate=False)
    return result.basis_size, result.wall_time


def oversampling_study(base: ExperimentConfig, deltas, seeds=None, h_overrides: dict | None = None,
                       workers: int = 1, path=None) -> list[dict]:
    """Train at every ``delta`` (and seed) with a shared tolerance.

    Returns one row per delta with the median final basis size over seeds and
    total wall time. If ``path`` is given a CSV ``delta,h,n_seeds,basis_size,
    basis_size_min,basis_size_max`` is written; wall times go to a JSON
    sidecar so that the CSV stays reproducible.
    """
    seeds = [base.training.seed] if seeds is None else list(seeds)
    jobs = []
    for delta in deltas:
        h = conforming_h(delta, base.h, h_overrides)
        build_pair(base.interior_rect, delta, h)  # fail fast on non-conforming input
        for seed in seeds:
            cfg = base.with_overrides(seed=seed, delta=delta, h=h)
            if base.prefix:
                cfg = replace(cfg, prefix=f"{base.prefix}_delta{delta:g}_seed{seed}")
            jobs.append((delta, h, cfg))
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_study_run, [job[2] for job in jobs]))
    else:
        outcomes = [_study_run(job[2]) for job in jobs]
    rows = []
    for delta in deltas:
        mine = [(job, res) for job, res in zip(jobs, outcomes) if job[0] == delta]
        sizes = [res[0] for _, res in mine]
        rows.append({
            "delta": delta,
            "h": mine[0][0][1],
            "n_seeds": len(sizes),
            "basis_size": float(np.median(sizes)),
            "basis_size_min": min(sizes),
            "basis_size_max": max(sizes),
            "basis_sizes": sizes,
            "wall_time": sum(res[1] for _, res in mine),
        })
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["delta,h,n_seeds,basis_size,basis_size_min,basis_size_max"]
        lines += [f"{_fmt(r['delta'])},{_fmt(r['h'])},{r['n_seeds']},{_fmt(r['basis_size'])},"
                  f"{r['basis_size_min']},{r['basis_size_max']}" for r in rows]
        _write_lines(path, lines)
        with open(path.with_suffix(".timing.json"), "w") as fh:
            json.dump({_fmt(r["delta"]): r["wall_time"] for r in rows}, fh, indent=2)
    return rows


def caccioppoli_check(cfg: ExperimentConfig, n_samples: int, sys: TransferSystem | None = None, path=None):
    """``(lhs, rhs)`` pairs for shifted solutions with seeded Gaussian boundary data."""
    if sys is None:
        sys = build_system(cfg)
    stream = GaussianStream(cfg.training.seed, CACCIOPPOLI_STREAM)
    pairs = [caccioppoli_ratio(sys, shifted_solution(sys, stream.normal(sys.n_boundary))) for _ in range(n_samples)]
    if path is not None:
        lines = ["sample,lhs,rhs,ratio"] + [f"{i},{_fmt(a)},{_fmt(b)},{_fmt(a / b)}" for i, (a, b) in enumerate(pairs)]
        _write_lines(Path(path), lines)
    return pairs


def median_error_curve(errors: ProjectionErrors) -> np.ndarray:
    return np.median(errors.total, axis=0)


def knee_ratio(sigmas, at: int = 8, window=(3, 15)) -> tuple[float, float]:
    """``sigma_at / sigma_{at+1}`` and the median of ``sigma_k / sigma_{k+1}`` over ``window`` (1-based)."""
    s = np.asarray(sigmas, dtype=float)
    ratios = s[:-1] / s[1:]
    lo, hi = window
    return float(ratios[at - 1]), float(np.median(ratios[lo - 1:hi]))


def knee_drop(median_curve, at=(7, 9), window=(3, 15)) -> tuple[float, float]:
    """Drop of the median error from ``N=at[0]`` to ``N=at[1]`` versus the median per-step drop in ``window``."""
    curve = np.log10(np.asarray(median_curve))
    drop = curve[at[0] - 1] - curve[at[1] - 1]
    lo, hi = window
    steps = curve[lo - 1:hi - 1] - curve[lo:hi]
    return float(drop), float(np.median(steps))

