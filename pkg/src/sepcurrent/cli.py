"""Command-line experiment driver.

Each run writes one directory holding ``config.json``, ``summary.json`` and
CSV artifacts. Every file embeds the full configuration, CSVs as leading
``#`` comment lines. Exit codes: 0 success, 1 configuration or I/O error,
2 numerical failure, 3 invariant violation.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError, InvariantViolation, NumericalError, SEPError
from .experiments import (StationaryProtocol, mirror_audits, order_audit, run_ensemble,
                          run_stationary)
from .heat_kernel import GridFunction
from .macro import (fd_solve, reconstruct_profile, relaxation_fit, solve_alpha,
                    solve_boundary_traces, volterra_sampler)
from .process import (AllOnes, AllZeros, Configuration, Deterministic, ModelParams,
                      ProductMeasure)
from .rng import init_generator
from .statistics import (block_average_l1, chaos_defect, current_at, current_profile,
                         empirical_profile, jsonable, k_point_moment)

COMMANDS = ("stationary", "macro", "simulate", "compare", "relax", "couple")


@dataclass
class ExperimentConfig:
    command: str = "stationary"
    n: int = 100
    k_boundary: int = 2
    j: float = 1.0
    t_end: float = 1.0
    t_burn: float = 50.0
    t_avg: float = 200.0
    replicas: int = 8
    seed: int = 0
    init: str = "zeros"
    grid: int = 400
    dt: float = 5e-3
    h: float = 1e-3
    out: str = "out"
    threads: int = 1

    def validate(self) -> "ExperimentConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"command: unknown {self.command!r}")
        for name in ("n", "k_boundary", "replicas", "grid", "threads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1, got {getattr(self, name)}")
        for name in ("j", "t_end", "t_avg", "dt", "h"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be > 0, got {getattr(self, name)}")
        if self.t_burn < 0:
            raise ConfigError(f"t_burn: must be >= 0, got {self.t_burn}")
        if self.seed < 0:
            raise ConfigError(f"seed: must be >= 0, got {self.seed}")
        if self.k_boundary > self.n:
            raise ConfigError(f"k_boundary: K={self.k_boundary} exceeds n={self.n}")
        if self.grid < 2:
            raise ConfigError("grid: must be >= 2")
        if self.init not in ("ones", "zeros", "half") and not self.init.startswith("file:"):
            raise ConfigError(f"init: expected ones|zeros|half|file:PATH, got {self.init!r}")
        if self.init.startswith("file:") and not os.path.isfile(self.init[5:]):
            raise ConfigError(f"init: no such file {self.init[5:]!r}")
        return self

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.n, self.k_boundary, self.j)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return "".join(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n"
                       for k, v in self.to_dict().items())

    @classmethod
    def from_text(cls, text: str, source="<config>") -> "ExperimentConfig":
        return cls(**parse_config_text(text, source))


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_CASTS = {"int": int, "float": float, "str": str, int: int, float: float, str: str}


def parse_config_text(text: str, source="<config>") -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes and underscores are equivalent."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _cast(key, value)
    return out


def _cast(key, value):
    try:
        return _CASTS[_FIELD_TYPES[key]](value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None


# --- artifacts --------------------------------------------------------------------

def _provenance(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True)


def write_json(path, payload: dict, cfg: ExperimentConfig):
    body = {"config": cfg.to_dict(), "seed": cfg.seed, **payload}
    with open(path, "w") as fh:
        json.dump(jsonable(body), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header, rows, cfg: ExperimentConfig):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config: {_provenance(cfg)}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, (int, np.integer)) else repr(float(v)) for v in row])


def _lattice_rows(profile):
    se = profile.stderr if profile.stderr is not None else np.zeros(len(profile))
    return [(int(x), r, m, s) for x, r, m, s in zip(profile.x, profile.r, profile.values, se)]


# --- initial data -----------------------------------------------------------------

def _read_init_file(path):
    with open(path) as fh:
        text = "".join(line for line in fh if not line.startswith("#"))
    if text.lstrip().startswith("r,value"):
        return GridFunction.from_csv(path)
    return text.strip()


def macro_initial(cfg: ExperimentConfig) -> GridFunction:
    if cfg.init == "ones":
        return GridFunction.constant(1.0, cfg.grid)
    if cfg.init == "zeros":
        return GridFunction.constant(0.0, cfg.grid)
    if cfg.init == "half":
        return GridFunction.constant(0.5, cfg.grid)
    data = _read_init_file(cfg.init[5:])
    if not isinstance(data, GridFunction):
        raise ConfigError("init: macro commands need an r,value CSV profile")
    if data.M != cfg.grid:
        data = GridFunction(np.interp(np.linspace(-1, 1, cfg.grid + 1), data.nodes, data.values))
    return data


def particle_initial(cfg: ExperimentConfig, replica: int):
    if cfg.init == "ones":
        return AllOnes()
    if cfg.init == "zeros":
        return AllZeros()
    if cfg.init == "half":
        return ProductMeasure(lambda r: 0.5, init_generator(cfg.seed, replica))
    data = _read_init_file(cfg.init[5:])
    if isinstance(data, GridFunction):
        g = data
        return ProductMeasure(lambda r: np.interp(r, g.nodes, g.values),
                              init_generator(cfg.seed, replica))
    config = Configuration.from_string(data, cfg.params)
    return Deterministic(config.occ.copy())


# --- commands ---------------------------------------------------------------------

def cmd_stationary(cfg):
    st = solve_alpha(cfg.j, cfg.k_boundary)
    r = np.linspace(-1, 1, cfg.grid + 1)
    write_csv(os.path.join(cfg.out, "profile.csv"), ["r", "value"],
              zip(r, st.profile(r)), cfg)
    write_json(os.path.join(cfg.out, "summary.json"),
               {**st.to_dict(), "current": st.current,
                "fourier_bound": min(cfg.j / 2, 0.25), "consistency": abs(st.J - (st.alpha - 0.5))},
               cfg)
    print(f"alpha={st.alpha:.15g} J={st.J:.15g}")


def cmd_macro(cfg):
    rho0 = macro_initial(cfg)
    traces = solve_boundary_traces(rho0, cfg.j, cfg.k_boundary, cfg.t_end, cfg.h)
    vol = reconstruct_profile(rho0, traces, traces.horizon)
    fd = fd_solve(rho0, cfg.j, cfg.k_boundary, traces.horizon, dt=cfg.dt).at(traces.horizon)
    gap = float(np.max(np.abs(vol.values - fd.values)))
    write_csv(os.path.join(cfg.out, "traces.csv"), ["t", "u_plus", "u_minus"],
              zip(traces.times, traces.u_plus, traces.u_minus), cfg)
    write_csv(os.path.join(cfg.out, "profile.csv"), ["r", "value"], zip(vol.r, vol.values), cfg)
    write_csv(os.path.join(cfg.out, "profile_fd.csv"), ["r", "value"], zip(fd.r, fd.values), cfg)
    st = solve_alpha(cfg.j, cfg.k_boundary)
    write_json(os.path.join(cfg.out, "summary.json"),
               {"t": traces.horizon, "sup_gap_volterra_fd": gap,
                "u_plus": float(traces.u_plus[-1]), "u_minus": float(traces.u_minus[-1]),
                "sup_distance_to_stationary": vol.sup_distance(st.profile)}, cfg)
    print(f"t={traces.horizon:g} sup|volterra - fd|={gap:.3e}")


def cmd_simulate(cfg):
    snaps = run_ensemble(cfg.params, cfg.replicas, cfg.seed, cfg.t_end,
                         init=lambda r: particle_initial(cfg, r), threads=cfg.threads)
    profile = empirical_profile(snaps)
    write_csv(os.path.join(cfg.out, "profile.csv"), ["x", "r", "mean", "stderr"],
              _lattice_rows(profile), cfg)
    payload = {"t": cfg.t_end, "mean_particle_count": float(snaps.sum(1).mean())}
    if cfg.replicas >= 2 and cfg.n >= 2:
        half = cfg.n // 2
        payload["chaos_defect"] = chaos_defect(snaps, (-half, half))
    st = solve_alpha(cfg.j, cfg.k_boundary)
    payload["block_l1_a0.5"] = float(np.mean([block_average_l1(s, 0.5, st) for s in snaps]))
    write_json(os.path.join(cfg.out, "summary.json"), payload, cfg)
    print(f"simulated {cfg.replicas} replicas to t={cfg.t_end:g}")


def cmd_compare(cfg):
    params = cfg.params
    N = params.N
    st = solve_alpha(cfg.j, cfg.k_boundary)
    half = N // 2
    tuples = [(-half, half), (-half, 0, half)] if N >= 2 else []
    protocol = StationaryProtocol(t_burn=cfg.t_burn, t_avg=cfg.t_avg, init=lambda r: particle_initial(cfg, r))
    est = run_stationary(params, cfg.replicas, cfg.seed, protocol, tuples, st, cfg.threads)
    profile = empirical_profile(est)
    ref = st.profile(profile.r)
    bonds, cur, cur_se = current_profile(est)
    macro = fd_solve(macro_initial(cfg), cfg.j, cfg.k_boundary, max(cfg.t_burn, cfg.dt),
                     M=cfg.grid, dt=min(cfg.dt, 2.0 / cfg.grid)).values[-1]
    macro_at_x = np.interp(profile.r, np.linspace(-1, 1, cfg.grid + 1), macro)
    moments = {}
    for tup in tuples:
        est_k = k_point_moment(est, tup)
        target = float(np.prod(st.profile(np.array(tup) / N)))
        moments[",".join(map(str, tup))] = {"value": est_k.value, "stderr": est_k.stderr,
                                            "product_of_stationary": target}
    mid = current_at(est, 0) if N >= 1 else None
    write_csv(os.path.join(cfg.out, "profile.csv"), ["x", "r", "mean", "stderr"],
              _lattice_rows(profile), cfg)
    write_json(os.path.join(cfg.out, "summary.json"), {
        "alpha": st.alpha, "J": st.J,
        "sup_deviation": float(np.max(np.abs(profile.values - ref))),
        "sup_deviation_macro": float(np.max(np.abs(profile.values - macro_at_x))),
        "max_stderr": float(profile.stderr.max()),
        "moments": moments,
        "current_mid": {"value": mid.value, "stderr": mid.stderr, "reference": st.current},
        "current_bonds": {"min": float(cur.min()), "max": float(cur.max())},
        "block_l1": {str(a): float(np.mean(v)) for a, v in est.l1_samples.items()},
        "batches": est.n_batches, "replicas": est.replicas,
    }, cfg)
    print(f"sup|profile - rho*| = {np.max(np.abs(profile.values - ref)):.4f}")


def cmd_relax(cfg):
    fit = relaxation_fit(cfg.j, cfg.k_boundary, cfg.t_end,
                         sampler=volterra_sampler(cfg.j, cfg.k_boundary, M=cfg.grid, h=cfg.h))
    write_csv(os.path.join(cfg.out, "relaxation.csv"), ["t", "w"], zip(fit.times, fit.w), cfg)
    write_json(os.path.join(cfg.out, "summary.json"), fit.to_dict(), cfg)
    print(f"rate c={fit.rate:.4f} prefactor c'={fit.prefactor:.4f} R^2={fit.r_squared:.6f}")


def cmd_couple(cfg):
    params = cfg.params
    seeds = [cfg.seed + i for i in range(cfg.replicas)]
    order = [order_audit(params, cfg.t_end, s) for s in seeds]
    mirror = mirror_audits(params, cfg.t_end, seeds)
    write_json(os.path.join(cfg.out, "summary.json"), {
        "order": [{"seed": a.seed, "ordered": a.ordered, "coalesced_at": a.coalesced_at}
                  for a in order],
        "mirror": [{"seed": s, "events": m.events, "site_checks": m.site_checks, "ok": m.ok}
                   for s, m in zip(seeds, mirror)],
        "violations": sum(not a.ordered for a in order) + sum(not m.ok for m in mirror),
    }, cfg)
    print(f"{len(seeds)} seeds: order and mirror audits passed")


HANDLERS = {"stationary": cmd_stationary, "macro": cmd_macro, "simulate": cmd_simulate,
            "compare": cmd_compare, "relax": cmd_relax, "couple": cmd_couple}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sepcurrent", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="flat key = value file; flags override it")
    for f in fields(ExperimentConfig):
        if f.name == "command":
            continue
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(flag, dest=f.name, type=_CASTS[f.type], default=None)
    return parser


def resolve_config(argv=None) -> ExperimentConfig:
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                values.update(parse_config_text(fh.read(), args.config))
        except OSError as exc:
            raise ConfigError(f"config: {exc}") from None
    values.update({k: v for k, v in vars(args).items()
                   if k not in ("config", "command") and v is not None})
    values["command"] = args.command
    return ExperimentConfig(**values).validate()


def run(cfg: ExperimentConfig) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    write_json(os.path.join(cfg.out, "config.json"), {}, cfg)
    HANDLERS[cfg.command](cfg)
    return 0


def main(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
        return run(cfg)
    except SystemExit as exc:  # argparse: --help or a usage error
        return exc.code if isinstance(exc.code, int) else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3
    except SEPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
