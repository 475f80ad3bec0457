"""Command-line interface: config-driven runs with CSV outputs.

All commands read one JSON config file (schema below) and accept a small
set of override flags.  Outputs are CSV files whose first line is a
comment recording the config hash and seed, so every artifact names the
run that produced it; runs with the same config and seed are
bit-identical.

Config schema (JSON object; unknown keys are rejected)::

    {
      "sites": 2,                  // number of sites n
      "alphabet_sizes": 2,         // int, or list of n ints
      "population_size": 10,
      "crossover_probs": [0.2],    // n-1 values, sum <= 1
      "rho": [1.5],                // optional, n-1 rates (diffusion variant)
      "variant": "finite",         // finite | deterministic | diffusion
      "initial_counts": [4,2,1,3], // length prod(alphabet), sum N
      "initial_partition": "1,2",  // blocks "|"-separated, sites ","-separated
      "lde_sites": [1, 2],         // optional, defaults to all sites
      "t_end": 1.0,
      "grid": [0.0, 0.5, 1.0],     // or {"stop": 1.0, "num": 11}
      "replicates": 100,
      "seed": 42,
      "out": "runs/demo"
    }

Exit codes: 0 success, 2 config validation failure, 3 size cap exceeded,
4 duality-check defect above tolerance.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .backward import (
    BackwardModel,
    generator_theta,
    generator_theta_det,
    generator_theta_diff,
    generator_to_csv,
    partition_trajectory_to_csv,
    simulate_backward,
)
from .errors import ConfigError, MoranRecError, SizeCapError
from .expectations import (
    check_generator_duality,
    expected_sampling,
    fixation_2site,
    lde_conjugation_3site,
    lde_trajectory,
)
from .forward import ForwardModel, simulate_forward, trajectory_to_csv
from .measures import (
    PopulationState,
    SiteSpace,
    measure_from_csv,
    measure_to_csv,
    type_token,
)
from .operators import DiffusionRates, RecombinationDistribution, sampling
from .partitions import Partition, coarsest, format_partition, parse_partition

_ALLOWED_KEYS = {
    "sites", "alphabet_sizes", "population_size", "crossover_probs", "rho",
    "variant", "initial_counts", "initial_population_file", "initial_partition",
    "lde_sites", "t_end", "grid", "replicates", "seed", "out",
}


@dataclass
class RunConfig:
    space: SiteSpace
    N: int
    recomb: RecombinationDistribution
    rho: DiffusionRates | None
    variant: str
    initial: PopulationState | None
    initial_partition: Partition
    lde_sites: tuple[int, ...]
    t_end: float
    grid: np.ndarray
    replicates: int
    seed: int
    out: Path
    exact_events: bool
    config_hash: str
    raw: dict


def config_hash(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def load_config(path: str | Path, overrides: argparse.Namespace) -> RunConfig:
    """Parse, validate and freeze a run configuration."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON ({path}, line {exc.lineno}): {exc.msg}")
    _require(isinstance(raw, dict), "config must be a JSON object")
    unknown = set(raw) - _ALLOWED_KEYS
    _require(not unknown, f"unknown config keys: {sorted(unknown)}")

    for field in ("seed", "replicates", "t_end", "out", "variant"):
        val = getattr(overrides, field.replace("-", "_"), None)
        if val is not None:
            raw[field] = val
    if getattr(overrides, "grid", None) is not None:
        raw["grid"] = [float(x) for x in overrides.grid.split(",")]

    n = raw.get("sites")
    _require(isinstance(n, int) and n >= 1, "'sites' must be a positive integer")
    alph = raw.get("alphabet_sizes", 2)
    if isinstance(alph, int):
        cards = (alph,) * n
    else:
        _require(isinstance(alph, list) and len(alph) == n,
                 f"'alphabet_sizes' must be an int or a list of {n} ints")
        cards = tuple(int(a) for a in alph)
    _require(all(c >= 1 for c in cards), "alphabet sizes must be at least 1")
    try:
        space = SiteSpace(cards)
    except SizeCapError as exc:
        raise ConfigError(str(exc))

    N = raw.get("population_size")
    _require(isinstance(N, int) and N >= 1, "'population_size' must be a positive integer")

    probs = raw.get("crossover_probs", [0.0] * (n - 1))
    _require(isinstance(probs, list) and len(probs) == n - 1,
             f"'crossover_probs' must list {n - 1} values")
    try:
        recomb = RecombinationDistribution(n, tuple(float(p) for p in probs))
    except ValueError as exc:
        raise ConfigError(f"'crossover_probs': {exc}")

    rho = None
    if raw.get("rho") is not None:
        _require(isinstance(raw["rho"], list) and len(raw["rho"]) == n - 1,
                 f"'rho' must list {n - 1} values")
        try:
            rho = DiffusionRates(n, tuple(float(p) for p in raw["rho"]))
        except ValueError as exc:
            raise ConfigError(f"'rho': {exc}")

    variant = raw.get("variant", "finite")
    _require(variant in ("finite", "deterministic", "diffusion"),
             "'variant' must be finite, deterministic or diffusion")
    _require(variant != "diffusion" or rho is not None,
             "diffusion variant needs 'rho'")

    initial = None
    if raw.get("initial_counts") is not None:
        counts = raw["initial_counts"]
        _require(isinstance(counts, list) and len(counts) == space.total_states,
                 f"'initial_counts' must list {space.total_states} integers")
        _require(all(isinstance(c, int) and c >= 0 for c in counts),
                 "'initial_counts' must be nonnegative integers")
        _require(sum(counts) == N, f"'initial_counts' must sum to {N}")
        initial = PopulationState.from_counts(space, counts)
    elif raw.get("initial_population_file") is not None:
        pop_path = path.parent / raw["initial_population_file"]
        _require(pop_path.exists(), f"population file not found: {pop_path}")
        m = measure_from_csv(pop_path.read_text(), space.sites, space.cards)
        _require(int(round(m.norm)) == N, f"population file must sum to {N}")
        initial = PopulationState(m, N)

    part_text = raw.get("initial_partition")
    if part_text is None:
        initial_partition = coarsest(range(1, n + 1))
    else:
        try:
            initial_partition = parse_partition(part_text)
        except Exception as exc:
            raise ConfigError(f"'initial_partition': {exc}")
        _require(initial_partition.ground == tuple(range(1, n + 1)),
                 f"'initial_partition' must cover sites 1..{n}")
    _require(variant != "finite" or len(initial_partition) <= N,
             "'initial_partition' has more blocks than individuals")

    lde_sites = tuple(raw.get("lde_sites", range(1, n + 1)))
    _require(all(isinstance(s, int) and 1 <= s <= n for s in lde_sites) and lde_sites,
             f"'lde_sites' must be site labels in 1..{n}")

    t_end = float(raw.get("t_end", 1.0))
    _require(t_end >= 0, "'t_end' must be nonnegative")

    grid_spec = raw.get("grid")
    if grid_spec is None:
        grid = np.linspace(0.0, t_end, 11)
    elif isinstance(grid_spec, dict):
        _require(set(grid_spec) <= {"stop", "num"}, "'grid' object takes stop and num")
        grid = np.linspace(0.0, float(grid_spec["stop"]), int(grid_spec.get("num", 11)))
    else:
        _require(isinstance(grid_spec, list) and grid_spec, "'grid' must be a list")
        grid = np.asarray([float(x) for x in grid_spec])
        _require(bool(np.all(np.diff(grid) >= 0)) and grid[0] >= 0,
                 "'grid' must be nondecreasing and nonnegative")

    replicates = int(raw.get("replicates", 0))
    _require(replicates >= 0, "'replicates' must be nonnegative")
    seed = int(raw.get("seed", 0))
    out = Path(raw.get("out", "."))

    return RunConfig(
        space=space, N=N, recomb=recomb, rho=rho, variant=variant,
        initial=initial, initial_partition=initial_partition,
        lde_sites=lde_sites, t_end=t_end, grid=grid, replicates=replicates,
        seed=seed, out=out, exact_events=bool(getattr(overrides, "exact_events", False)),
        config_hash=config_hash(raw), raw=raw,
    )


def _stamp(cfg: RunConfig) -> str:
    return f"config={cfg.config_hash} seed={cfg.seed} moranrec={__version__}"


def _write(cfg: RunConfig, name: str, text: str) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    target = cfg.out / name
    target.write_text(text)
    return target


def _write_manifest(cfg: RunConfig, command: str) -> None:
    manifest = {
        "command": command,
        "config": cfg.raw,
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "version": __version__,
    }
    _write(cfg, "run.json", json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _need_initial(cfg: RunConfig) -> PopulationState:
    if cfg.initial is None:
        raise ConfigError("this command needs 'initial_counts' or 'initial_population_file'")
    return cfg.initial


def expectations_to_csv(times, partitions, cards, values, comment: str) -> str:
    """Rows ``time,partition,type,value`` over a (times, partitions, types) block."""
    lines = [f"# {comment}", "time,partition,type,value"]
    for ti, t in enumerate(times):
        for pi, p in enumerate(partitions):
            ptxt = format_partition(p)
            for xi in range(values.shape[2]):
                lines.append(f'{t:.17g},"{ptxt}",{type_token(cards, xi)},'
                             f"{values[ti, pi, xi]:.17g}")
    return "\n".join(lines) + "\n"


def expectations_from_csv(text: str, cards, partitions, times) -> np.ndarray:
    """Parse :func:`expectations_to_csv` back into a dense block."""
    from .measures import parse_type_token

    pindex = {format_partition(p): i for i, p in enumerate(partitions)}
    tindex = {f"{t:.17g}": i for i, t in enumerate(times)}
    K = int(np.prod(cards)) if len(cards) else 1
    out = np.zeros((len(times), len(partitions), K))
    seen_header = False
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if not seen_header:
            if line != "time,partition,type,value":
                raise ValueError(f"unexpected header {line!r}")
            seen_header = True
            continue
        t, rest = line.split(",", 1)
        ptxt, token, value = rest.rsplit(",", 2)
        out[tindex[t], pindex[ptxt.strip('"')], parse_type_token(cards, token)] = float(value)
    return out


def cmd_simulate_forward(cfg: RunConfig) -> int:
    z0 = _need_initial(cfg)
    model = ForwardModel(cfg.space, cfg.N, cfg.recomb)
    _write_manifest(cfg, "simulate-forward")
    stamp = _stamp(cfg)
    a0 = cfg.initial_partition
    grid = cfg.grid
    mean = np.zeros((grid.size, cfg.space.total_states))
    msq = np.zeros_like(mean)
    for rep in range(cfg.replicates):
        rec = simulate_forward(model, z0, cfg.t_end, cfg.seed,
                               exact_events=cfg.exact_events, replicate=rep)
        _write(cfg, f"forward_rep{rep:04d}.csv",
               trajectory_to_csv(rec, cfg.space.cards, f"{stamp} replicate={rep}"))
        for gi, t in enumerate(grid):
            z_t = PopulationState.from_counts(cfg.space, rec.state_at(t))
            h = sampling(a0, z_t.measure).weights
            mean[gi] += h
            msq[gi] += h * h
    lines = [f"# {stamp}", "time,type,mean_h,stderr"]
    if cfg.replicates == 0:
        h0 = sampling(a0, z0.measure).weights
        for xi in range(h0.size):
            lines.append(f"0,{type_token(cfg.space.cards, xi)},{h0[xi]:.17g},0")
    else:
        mean /= cfg.replicates
        var = np.maximum(msq / cfg.replicates - mean**2, 0.0)
        se = np.sqrt(var / cfg.replicates)
        for gi, t in enumerate(grid):
            for xi in range(mean.shape[1]):
                lines.append(f"{t:.17g},{type_token(cfg.space.cards, xi)},"
                             f"{mean[gi, xi]:.17g},{se[gi, xi]:.17g}")
    _write(cfg, "forward_summary.csv", "\n".join(lines) + "\n")
    _write(cfg, "initial_population.csv", f"# {stamp}\n" + measure_to_csv(z0.measure))
    print(f"simulate-forward: {cfg.replicates} replicates -> {cfg.out}")
    return 0


def cmd_simulate_backward(cfg: RunConfig) -> int:
    model = BackwardModel(cfg.space.n, cfg.N, cfg.recomb, cfg.variant, cfg.rho)
    _write_manifest(cfg, "simulate-backward")
    stamp = _stamp(cfg)
    for rep in range(cfg.replicates):
        rec = simulate_backward(model, cfg.initial_partition, cfg.t_end, cfg.seed,
                                exact_events=cfg.exact_events, replicate=rep)
        _write(cfg, f"backward_rep{rep:04d}.csv",
               partition_trajectory_to_csv(rec, f"{stamp} replicate={rep} "
                                                f"variant={cfg.variant}"))
    print(f"simulate-backward[{cfg.variant}]: {cfg.replicates} replicates -> {cfg.out}")
    return 0


def cmd_expectations(cfg: RunConfig) -> int:
    z0 = _need_initial(cfg)
    model = BackwardModel(cfg.space.n, cfg.N, cfg.recomb, "finite", cfg.rho)
    traj = expected_sampling(model, z0, cfg.initial_partition, cfg.grid)
    _write_manifest(cfg, "expectations")
    _write(cfg, "expected_sampling.csv",
           expectations_to_csv(traj.times, traj.partitions, traj.cards,
                               traj.values, _stamp(cfg)))
    print(f"expectations: {traj.times.size} times x {len(traj.partitions)} "
          f"partitions -> {cfg.out}")
    return 0


def cmd_lde(cfg: RunConfig) -> int:
    z0 = _need_initial(cfg)
    model = BackwardModel(cfg.space.n, cfg.N, cfg.recomb, "finite", cfg.rho)
    traj = lde_trajectory(model, z0, cfg.lde_sites, cfg.grid)
    _write_manifest(cfg, "lde")
    _write(cfg, "expected_lde.csv",
           expectations_to_csv(traj.times, traj.partitions, traj.cards,
                               traj.values, _stamp(cfg)))
    if cfg.space.n == 3:
        report = [f"# {_stamp(cfg)}"]
        for variant in ("finite",) + (("diffusion",) if cfg.rho is not None else ()):
            m = BackwardModel(3, cfg.N, cfg.recomb, variant, cfg.rho)
            tr = lde_conjugation_3site(m)
            diag = ", ".join(f"{d:.12g}" for d in np.diag(tr.conjugated))
            print(f"lde[{variant}]: conjugated diagonal = [{diag}]")
            report.append(f"variant={variant}")
            report.append("eigenvalues: " + diag)
            resid = float(np.abs(tr.V @ tr.D @ tr.Vinv - tr.conjugated).max())
            report.append(f"diagonalization_residual: {resid:.3e}")
        _write(cfg, "lde_diagonalization.txt", "\n".join(report) + "\n")
    print(f"lde: sites {cfg.lde_sites} -> {cfg.out}")
    return 0


def cmd_duality_check(cfg: RunConfig, tol: float = 1e-8) -> int:
    fwd = ForwardModel(cfg.space, cfg.N, cfg.recomb)
    bwd = BackwardModel(cfg.space.n, cfg.N, cfg.recomb, "finite", cfg.rho)
    defect = check_generator_duality(fwd, bwd)
    _write_manifest(cfg, "duality-check")
    _write(cfg, "duality_report.txt",
           f"# {_stamp(cfg)}\nmax_defect: {defect:.6e}\ntolerance: {tol:.6e}\n"
           f"status: {'ok' if defect <= tol else 'FAIL'}\n")
    print(f"duality-check: defect {defect:.3e} "
          f"({'<' if defect <= tol else '>'}= tol {tol:.1e})")
    return 0 if defect <= tol else 4


def cmd_fixation(cfg: RunConfig) -> int:
    z0 = _need_initial(cfg)
    model = ForwardModel(cfg.space, cfg.N, cfg.recomb)
    fix = fixation_2site(model, z0)
    _write_manifest(cfg, "fixation")
    _write(cfg, "fixation.csv", f"# {_stamp(cfg)}\n" + measure_to_csv(fix))
    for xi in range(fix.n_states):
        print(f"fixation[{type_token(cfg.space.cards, xi)}] = {fix.weights[xi]:.12g}")
    return 0


def cmd_generators(cfg: RunConfig) -> int:
    """Extra: dump the partition generator(s) as dense CSV."""
    _write_manifest(cfg, "generators")
    stamp = _stamp(cfg)
    model = BackwardModel(cfg.space.n, cfg.N, cfg.recomb, "finite", cfg.rho)
    _write(cfg, "theta_finite.csv", generator_to_csv(generator_theta(model), stamp))
    _write(cfg, "theta_deterministic.csv",
           generator_to_csv(generator_theta_det(model), stamp))
    if cfg.rho is not None:
        _write(cfg, "theta_diffusion.csv",
               generator_to_csv(generator_theta_diff(model), stamp))
    print(f"generators -> {cfg.out}")
    return 0


COMMANDS = {
    "simulate-forward": cmd_simulate_forward,
    "simulate-backward": cmd_simulate_backward,
    "expectations": cmd_expectations,
    "lde": cmd_lde,
    "duality-check": cmd_duality_check,
    "fixation": cmd_fixation,
    "generators": cmd_generators,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moranrec",
        description="Moran model with single-crossover recombination and its "
                    "partitioning dual",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--reps", dest="replicates", type=int, default=None)
        p.add_argument("--t-end", dest="t_end", type=float, default=None)
        p.add_argument("--grid", type=str, default=None,
                       help="comma-separated times, overrides the config grid")
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--variant", type=str, default=None,
                       choices=("finite", "deterministic", "diffusion"))
        p.add_argument("--exact-events", dest="exact_events", action="store_true",
                       help="step through silent events instead of thinning them")
        if name == "duality-check":
            p.add_argument("--tol", type=float, default=1e-8)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args)
        if args.command == "duality-check":
            return cmd_duality_check(cfg, tol=args.tol)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SizeCapError as exc:
        print(f"size cap exceeded: {exc} (reduce sites, alphabet or N)", file=sys.stderr)
        return 3
    except MoranRecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
