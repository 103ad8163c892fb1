"""Config-driven experiment runner.

Configs are flat UTF-8 ``key = value`` files (``#`` starts a comment).
Recognized keys: experiment, seed, dims, samples, beta, gamma, temperature,
t_max, steps, output, format, fixture, kappa, k_v, max_dim.

Every emitted number is a deterministic function of (config, seed): sampling
uses numpy's PCG64 generator, one child seed per sample, so reruns are
byte-identical regardless of the worker count (capped by the environment
variable QSPLIT_MAX_WORKERS).

Exit codes: 0 success, 2 usage/config error, 3 resource ceiling exceeded,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .correlations import entanglement_entropy
from .dynamics import (
    IntegrationFailureError,
    MasterEqParams,
    QbmModel,
    ResourceLimitError,
    build_hamiltonians,
    calibrate_friction,
    default_model,
    initial_state,
    integrate_recoilless,
    evolve_exact,
    position_momentum_ops,
    projection_derivative_compare,
    system_projection_schemes,
)
from .hilbert import (
    CompositeSpace,
    DensityMatrix,
    HermitianOperator,
    partial_trace_raw,
    trace_norm,
)
from .projections import (
    BornProjection,
    SeparableDecomposition,
    appendix_a_mixed_condition,
    appendix_a_pure_condition,
    apply_projection,
    lemma1_residual,
    lemma2_residual,
)
from .sampling import haar_state, haar_unitary, random_density, random_product_state
from .structures import (
    Bipartition,
    UnitaryRefactorization,
    apply_structure_map,
    refactor_coefficients,
    regroup,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RESOURCE = 3
EXIT_NUMERICAL = 4

EXPERIMENTS = ("lemma1", "lemma2", "er-scan", "appendix-verify", "qbm-compare")

_CONFIG_KEYS = {
    "experiment", "seed", "dims", "samples", "beta", "gamma", "temperature",
    "t_max", "steps", "output", "format", "fixture", "kappa", "k_v", "max_dim",
}


@dataclass
class ExperimentConfig:
    experiment: str = ""
    seed: int = 0
    dims: tuple = (2, 2, 2)
    samples: int = 100
    beta: float = 2.0
    gamma: float = 0.05
    temperature: float = 2.0
    t_max: float = 6.0
    steps: int = 40
    output: str = ""
    format: str = "csv"
    fixture: str = "none"
    kappa: float | None = None
    k_v: float = 0.0
    max_dim: int = 4096

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        d["dims"] = ",".join(str(x) for x in self.dims)
        d["kappa"] = "" if self.kappa is None else repr(self.kappa)
        # the destination path is not an input to the numbers; leaving it out
        # keeps reruns byte-identical wherever they are written
        del d["output"]
        return d


class ConfigError(ValueError):
    pass


def parse_config(path: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                _assign(cfg, key, value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return cfg


def _assign(cfg: ExperimentConfig, key: str, value: str):
    if key == "dims":
        cfg.dims = tuple(int(x) for x in value.split(","))
    elif key in ("seed", "samples", "steps", "max_dim"):
        setattr(cfg, key, int(value))
    elif key in ("beta", "gamma", "temperature", "t_max", "k_v"):
        setattr(cfg, key, float(value))
    elif key == "kappa":
        cfg.kappa = float(value)
    else:
        setattr(cfg, key, value)


def validate_config(cfg: ExperimentConfig) -> list:
    """All constraint violations, resource ones prefixed 'resource:'."""
    problems = []
    if cfg.experiment not in EXPERIMENTS:
        problems.append(
            f"experiment must be one of {', '.join(EXPERIMENTS)}; got {cfg.experiment!r}"
        )
    if cfg.samples < 1:
        problems.append(f"samples must be >= 1, got {cfg.samples}")
    if not (0 <= cfg.seed < 2 ** 64):
        problems.append("seed must fit in 64 unsigned bits")
    if any(d < 2 for d in cfg.dims) or len(cfg.dims) < 2:
        problems.append(f"dims must be >= 2 particles of local dim >= 2, got {cfg.dims}")
    if cfg.experiment in ("lemma1", "lemma2") and len(cfg.dims) < 3:
        problems.append("lemma experiments need at least 3 particles")
    total = int(math.prod(cfg.dims))
    if total > cfg.max_dim:
        problems.append(f"resource: total_dim {total} exceeds ceiling {cfg.max_dim}")
    if cfg.format not in ("csv", "json"):
        problems.append(f"format must be csv or json, got {cfg.format!r}")
    if cfg.fixture not in ("none", "product"):
        problems.append(f"fixture must be none or product, got {cfg.fixture!r}")
    if cfg.steps < 3:
        problems.append(f"steps must be >= 3, got {cfg.steps}")
    if cfg.t_max <= 0:
        problems.append(f"t_max must be positive, got {cfg.t_max}")
    if cfg.beta <= 0:
        problems.append(f"beta must be positive, got {cfg.beta}")
    if cfg.temperature <= 0:
        problems.append(f"temperature must be positive, got {cfg.temperature}")
    if cfg.gamma < 0:
        problems.append(f"gamma must be >= 0, got {cfg.gamma}")
    return problems


@dataclass
class ResultRecord:
    experiment: str
    seed: int
    columns: dict
    summary: dict
    config_echo: dict
    version: str = __version__


def _summarize(columns: dict) -> dict:
    summary = {}
    for name, values in columns.items():
        vals = [v for v in values if isinstance(v, (int, float)) and not math.isnan(v)]
        if not vals:
            continue
        arr = np.asarray(vals, dtype=float)
        summary[name] = {
            "min": float(arr.min()),
            "median": float(np.median(arr)),
            "mean": float(arr.mean()),
            "max": float(arr.max()),
            "frac_above_1e-06": float(np.mean(arr > 1e-6)),
        }
    return summary


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_record(record: ResultRecord, path: str, fmt: str):
    if fmt == "json":
        # strict JSON has no NaN; padded series entries become null
        columns = {
            k: [None if isinstance(v, float) and math.isnan(v) else v for v in vals]
            for k, vals in record.columns.items()
        }
        payload = {
            "version": record.version,
            "experiment": record.experiment,
            "seed": record.seed,
            "config": record.config_echo,
            "columns": columns,
            "summary": record.summary,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return
    names = list(record.columns)
    rows = zip(*(record.columns[n] for n in names)) if names else []
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# qsplit {record.version}\n")
        for key in sorted(record.config_echo):
            fh.write(f"# {key} = {record.config_echo[key]}\n")
        for name in sorted(record.summary):
            stats = record.summary[name]
            parts = " ".join(f"{k}={_fmt(v)}" for k, v in sorted(stats.items()))
            fh.write(f"# summary {name}: {parts}\n")
        fh.write(",".join(names) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("QSPLIT_MAX_WORKERS", "1")))
    except ValueError:
        return 1


def _map_samples(fn, n: int, seed: int):
    """Deterministic seeded map: one RNG child per sample index, results in
    index order regardless of worker count."""
    children = np.random.SeedSequence(seed).spawn(n)
    rngs = [np.random.Generator(np.random.PCG64(c)) for c in children]
    workers = _worker_count()
    indices = range(n)
    if workers == 1:
        return [fn(i, rngs[i]) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda i: fn(i, rngs[i]), indices))


def _lemma_setup(cfg: ExperimentConfig):
    space = CompositeSpace(cfg.dims)
    n = space.n_particles
    cut = Bipartition(space, tuple(range(n - 1)), (n - 1,))
    alt = regroup(cut, n - 2, "s_to_e")
    e_dim = cfg.dims[-1]
    ref = DensityMatrix(np.eye(e_dim) / e_dim, CompositeSpace((e_dim,)))
    scheme = BornProjection(cut, ref)
    return space, cut, alt, scheme


def _sample_state(cfg, space, rng):
    if cfg.fixture == "product":
        return random_product_state(space, rng)
    return haar_state(space, rng)


def run_lemma1(cfg: ExperimentConfig) -> ResultRecord:
    space, _cut, alt, scheme = _lemma_setup(cfg)

    def one(i, rng):
        psi = _sample_state(cfg, space, rng)
        rep = lemma1_residual(psi.density_matrix(), scheme, alt, state_id=str(i))
        return rep.residual, rep.frobenius

    results = _map_samples(one, cfg.samples, cfg.seed)
    columns = {
        "sample": list(range(cfg.samples)),
        "residual": [r[0] for r in results],
        "frobenius": [r[1] for r in results],
    }
    return ResultRecord(cfg.experiment, cfg.seed, columns, _summarize(columns), cfg.echo())


def run_lemma2(cfg: ExperimentConfig) -> ResultRecord:
    space, _cut, alt, scheme = _lemma_setup(cfg)
    alt_e_dims = tuple(space.dims[q] for q in alt.e_particles)
    d = int(math.prod(alt_e_dims))
    alt_ref = DensityMatrix(np.eye(d) / d, CompositeSpace(alt_e_dims))
    scheme_alt = BornProjection(alt, alt_ref)

    def one(i, rng):
        psi = _sample_state(cfg, space, rng)
        return lemma2_residual(psi.density_matrix(), scheme, scheme_alt)

    residuals = _map_samples(one, cfg.samples, cfg.seed)
    columns = {"sample": list(range(cfg.samples)), "residual": residuals}
    return ResultRecord(cfg.experiment, cfg.seed, columns, _summarize(columns), cfg.echo())


def run_er_scan(cfg: ExperimentConfig) -> ResultRecord:
    space = CompositeSpace(cfg.dims)
    n = space.n_particles
    new_dims = (cfg.dims[0], space.total_dim // cfg.dims[0])
    cut = Bipartition(space, tuple(range(n - 1)), (n - 1,))
    alt = regroup(cut, n - 2, "s_to_e") if n >= 3 else None

    def one(i, rng):
        psi = random_product_state(space, rng)
        m = UnitaryRefactorization(space, haar_unitary(space.total_dim, rng), new_dims)
        mapped = apply_structure_map(psi, m)
        ent_u = entanglement_entropy(mapped, m.target_cut)
        ent_r = entanglement_entropy(psi, alt) if alt is not None else 0.0
        return ent_u, ent_r

    results = _map_samples(one, cfg.samples, cfg.seed)
    columns = {
        "sample": list(range(cfg.samples)),
        "entropy_refactorized": [r[0] for r in results],
        "entropy_regrouped": [r[1] for r in results],
    }
    return ResultRecord(cfg.experiment, cfg.seed, columns, _summarize(columns), cfg.echo())


def run_appendix_verify(cfg: ExperimentConfig) -> ResultRecord:
    space = CompositeSpace(cfg.dims)
    n = space.n_particles
    cut = Bipartition(space, tuple(range(n - 1)), (n - 1,))
    e_dim = cfg.dims[-1]
    s_dims = cfg.dims[:-1]
    ref = DensityMatrix(np.eye(e_dim) / e_dim, CompositeSpace((e_dim,)))
    scheme = BornProjection(cut, ref)
    new_dims = (cfg.dims[0], space.total_dim // cfg.dims[0])

    def oracle(q_native, coeffs):
        mapped = coeffs.map_operator(q_native)
        d_sp, d_ep = coeffs.new_dims
        return np.einsum("ikjk->ij", mapped.reshape(d_sp, d_ep, d_sp, d_ep))

    def one(i, rng):
        m = UnitaryRefactorization(space, haar_unitary(space.total_dim, rng), new_dims)
        coeffs = refactor_coefficients(cut, m)
        # pure input
        psi = haar_state(space, rng)
        rho = psi.density_matrix()
        a = appendix_a_pure_condition(psi, scheme, coeffs)
        q = rho.matrix - apply_projection(scheme, rho.matrix)
        err_pure = float(np.max(np.abs(a - oracle(q, coeffs))))
        tr_pure = float(abs(np.trace(a)))
        # mixed separable input
        weights = rng.dirichlet((1.0, 1.0))
        sep = SeparableDecomposition(
            tuple(weights),
            tuple(random_density(CompositeSpace(s_dims), rng) for _ in range(2)),
            tuple(random_density(CompositeSpace((e_dim,)), rng) for _ in range(2)),
        )
        rho_m = sep.to_density(cut)
        lam = appendix_a_mixed_condition(sep, scheme, coeffs)
        q_m = rho_m.matrix - apply_projection(scheme, rho_m.matrix)
        err_mixed = float(np.max(np.abs(lam - oracle(q_m, coeffs))))
        tr_mixed = float(abs(np.trace(lam)))
        return tr_pure, err_pure, tr_mixed, err_mixed

    results = _map_samples(one, cfg.samples, cfg.seed)
    columns = {
        "sample": list(range(cfg.samples)),
        "pure_trace_identity": [r[0] for r in results],
        "pure_oracle_error": [r[1] for r in results],
        "mixed_trace_identity": [r[2] for r in results],
        "mixed_oracle_error": [r[3] for r in results],
    }
    return ResultRecord(cfg.experiment, cfg.seed, columns, _summarize(columns), cfg.echo())


def run_qbm_compare(cfg: ExperimentConfig) -> ResultRecord:
    base = default_model()
    kappas = base.kappas if cfg.kappa is None else (cfg.kappa,) * base.n_e
    model = QbmModel(
        n_s=base.n_s, n_e=base.n_e, masses_s=base.masses_s, masses_e=base.masses_e,
        omegas_e=base.omegas_e, kappas=kappas, k_pair=cfg.k_v,
        d_s=base.d_s, d_e=base.d_e, max_total_dim=cfg.max_dim,
    )
    parts = build_hamiltonians(model)
    amp = np.zeros(model.d_s, dtype=np.complex128)
    amp[0] = amp[1] = 1.0 / math.sqrt(2.0)
    rho_s = DensityMatrix(np.outer(amp, amp.conj()), CompositeSpace((model.d_s,)))
    rho0 = initial_state(model, cfg.beta, "joined_mode_product", rho_s=rho_s)
    times = np.linspace(0.0, cfg.t_max, cfg.steps + 1)
    traj = evolve_exact(rho0, parts.total, times, hbar=model.hbar)

    scheme_original, scheme_joined = system_projection_schemes(model, cfg.beta)
    comp = projection_derivative_compare(traj, scheme_original, scheme_joined)

    exact_reduced = [
        partial_trace_raw(st.matrix, model.space.dims, [0]) for st in traj.states
    ]
    x_loc, p_loc = position_momentum_ops(
        model.d_s, model.masses_s[0], model.basis_frequency, model.hbar
    )
    h_loc = HermitianOperator(
        p_loc.matrix @ p_loc.matrix / (2.0 * model.masses_s[0]), x_loc.space
    )
    params = MasterEqParams(
        m=model.masses_s[0], gamma=cfg.gamma, temperature=cfg.temperature, hbar=model.hbar
    )
    gamma_fit = calibrate_friction(exact_reduced, times, h_loc, x_loc.matrix, params)
    params_fit = MasterEqParams(
        m=model.masses_s[0], gamma=gamma_fit, temperature=cfg.temperature, hbar=model.hbar
    )
    master = integrate_recoilless(
        DensityMatrix(exact_reduced[0], x_loc.space), h_loc, x_loc.matrix,
        params_fit, times,
    )
    exact_master = [
        0.5 * trace_norm(st.matrix - r) for st, r in zip(master.states, exact_reduced)
    ]

    deriv = [float("nan")] + list(comp.derivative_distance) + [float("nan")]
    columns = {
        "t": [float(t) for t in times],
        "reduction_distance": [float(v) for v in comp.reduction_distance],
        "derivative_distance": [float(v) for v in deriv],
        "exact_vs_master": [float(v) for v in exact_master],
    }
    summary = _summarize(columns)
    summary["run"] = {
        "gamma_calibrated": float(gamma_fit),
        "top_level_occupation": float(traj.metadata["top_level_occupation"]),
        "truncation_safe": bool(traj.metadata["truncation_safe"]),
        "master_min_eigenvalue": float(master.metadata["min_eigenvalue"]),
    }
    return ResultRecord(cfg.experiment, cfg.seed, columns, summary, cfg.echo())


_RUNNERS = {
    "lemma1": run_lemma1,
    "lemma2": run_lemma2,
    "er-scan": run_er_scan,
    "appendix-verify": run_appendix_verify,
    "qbm-compare": run_qbm_compare,
}


def run(cfg: ExperimentConfig) -> ResultRecord:
    """Dispatch a validated config to its experiment pipeline."""
    problems = validate_config(cfg)
    if problems:
        raise ConfigError("; ".join(problems))
    return _RUNNERS[cfg.experiment](cfg)


def _error_record(path: str, code: int, message: str):
    sys.stderr.write(json.dumps({"error": message, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qsplit", description=__doc__)
    sub = parser.add_subparsers(dest="command")
    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--output", default=None)
    p_val = sub.add_parser("validate", help="list config violations without running")
    p_val.add_argument("--config", required=True)
    sub.add_parser("list-experiments", help="print the available experiment names")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0

    if args.command == "list-experiments":
        for name in EXPERIMENTS:
            print(name)
        return EXIT_OK

    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        cfg = parse_config(args.config)
    except OSError as exc:
        return _error_record(args.config, EXIT_USAGE, f"cannot read config: {exc}")
    except ConfigError as exc:
        return _error_record(args.config, EXIT_USAGE, str(exc))

    if args.command == "validate":
        problems = validate_config(cfg)
        for p in problems:
            print(p)
        return EXIT_OK if not problems else EXIT_USAGE

    if args.seed is not None:
        cfg.seed = args.seed
    if args.output is not None:
        cfg.output = args.output
    problems = validate_config(cfg)
    if problems:
        code = EXIT_RESOURCE if all(p.startswith("resource:") for p in problems) else EXIT_USAGE
        return _error_record(args.config, code, "; ".join(problems))

    try:
        record = _RUNNERS[cfg.experiment](cfg)
    except ResourceLimitError as exc:
        return _error_record(args.config, EXIT_RESOURCE, str(exc))
    except IntegrationFailureError as exc:
        return _error_record(args.config, EXIT_NUMERICAL, str(exc))

    out = cfg.output or f"qsplit_{cfg.experiment}.{cfg.format}"
    write_record(record, out, cfg.format)
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
