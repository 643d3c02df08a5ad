"""Command-line front end: sectioned key=value configs in, CSV tables out.

Commands: dispersion (growth-rate table over the k grid), modes (per-mode
field dumps), outer-coeffs (boundary-coefficient sweeps), oracle (Evans scan)
and verify (invariant suite).  Exit codes: 0 success, 1 numerical failure,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SolverError
from .evans import evans_function
from .modes import reconstruct_fields
from .outer_general import _sigma0
from .pipeline import Pipeline, SolverOptions
from .profiles import COMPACT, PhysicalParams, make_profile
from .verification import format_results, run_verification

_PROFILE_KEYS = {"kind", "rho_minus", "rho_plus", "ell", "a", "csv"}
_PHYSICAL_KEYS = {"g", "mu", "k", "k_min", "k_max", "k_count", "k1", "k2"}
_NUMERICAL_KEYS = {"n_elements", "grading", "tol", "eps_star", "n_modes",
                   "lambda_grid_points"}
_OUTPUT_KEYS = {"directory", "formats"}

_SCHEMA = """\
[profile]            # required
kind = tanh | bump | tabulated
rho_minus = <positive float>
rho_plus = <positive float>
ell = <float>        # tanh only
a = <float>          # bump only
csv = <path>         # tabulated only: two columns x, rho

[physical]           # required
g = <positive float>
mu = <positive float>
k = <positive float>            # or k_min/k_max/k_count for a grid
k1 = <float>  k2 = <float>      # optional split, k^2 = k1^2 + k2^2

[numerical]          # optional
n_elements = 256
grading = center:4 | uniform | geometric:<ratio>
tol = 1e-8
eps_star = <float>   # default 0.01*sqrt(g/L0)
n_modes = 8
lambda_grid_points = 16

[output]             # optional
directory = .
formats = csv
"""


@dataclass
class RunConfig:
    profile: object
    k_values: list
    g: float
    mu: float
    k_split: tuple | None
    opts: SolverOptions
    out_dir: str = "."

    def params_for(self, k):
        if self.k_split is not None and len(self.k_values) == 1:
            k1, k2 = self.k_split
            return PhysicalParams(g=self.g, mu=self.mu, k=k, k1=k1, k2=k2)
        return PhysicalParams(g=self.g, mu=self.mu, k=k)


def _getfloat(sec, key, name, required=False, default=None):
    if key not in sec:
        if required:
            raise ConfigError(
                f"missing required key '{key}' in section [{name}]\n"
                f"expected schema:\n{_SCHEMA}")
        return default
    try:
        return float(sec[key])
    except ValueError:
        raise ConfigError(f"{name}.{key} is not a number: {sec[key]!r}") from None


def parse_config(text):
    """Parse and validate the sectioned key=value configuration."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for section, allowed in (("profile", _PROFILE_KEYS),
                             ("physical", _PHYSICAL_KEYS),
                             ("numerical", _NUMERICAL_KEYS),
                             ("output", _OUTPUT_KEYS)):
        if section in cp:
            unknown = set(cp[section]) - allowed
            if unknown:
                raise ConfigError(
                    f"unknown key '{sorted(unknown)[0]}' in section [{section}]")
    if "profile" not in cp or "physical" not in cp:
        raise ConfigError(f"config needs [profile] and [physical] sections\n"
                          f"expected schema:\n{_SCHEMA}")

    sec = cp["profile"]
    kind = sec.get("kind")
    if kind not in ("tanh", "bump", "tabulated"):
        raise ConfigError(f"profile.kind must be tanh, bump or tabulated, "
                          f"got {kind!r}")
    rho_minus = _getfloat(sec, "rho_minus", "profile",
                          required=kind != "tabulated")
    rho_plus = _getfloat(sec, "rho_plus", "profile",
                         required=kind != "tabulated")
    if kind == "tanh":
        profile = make_profile("tanh", rho_minus=rho_minus, rho_plus=rho_plus,
                               ell=_getfloat(sec, "ell", "profile", required=True))
    elif kind == "bump":
        profile = make_profile("bump", rho_minus=rho_minus, rho_plus=rho_plus,
                               a=_getfloat(sec, "a", "profile", required=True))
    else:
        path = sec.get("csv")
        if not path:
            raise ConfigError("profile.csv path is required for tabulated kind")
        samples = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                samples.append((float(row[0]), float(row[1])))
        profile = make_profile("tabulated", samples=samples)

    sec = cp["physical"]
    g = _getfloat(sec, "g", "physical", required=True)
    mu = _getfloat(sec, "mu", "physical", required=True)
    if g <= 0:
        raise ConfigError("physical.g must be positive")
    if mu <= 0:
        raise ConfigError("physical.mu must be positive")
    if "k" in sec:
        k_values = [_getfloat(sec, "k", "physical", required=True)]
    elif {"k_min", "k_max", "k_count"} <= set(sec):
        k_min = _getfloat(sec, "k_min", "physical")
        k_max = _getfloat(sec, "k_max", "physical")
        count = int(_getfloat(sec, "k_count", "physical"))
        if not 0 < k_min <= k_max or count < 1:
            raise ConfigError("physical k range must be increasing and positive")
        k_values = list(np.linspace(k_min, k_max, count))
    else:
        raise ConfigError("physical needs k or k_min/k_max/k_count\n"
                          f"expected schema:\n{_SCHEMA}")
    if any(k <= 0 for k in k_values):
        raise ConfigError("physical.k must be positive")
    k_split = None
    if "k1" in sec or "k2" in sec:
        k_split = (_getfloat(sec, "k1", "physical", required=True),
                   _getfloat(sec, "k2", "physical", required=True))

    opts = SolverOptions()
    if "numerical" in cp:
        sec = cp["numerical"]
        opts.n_elements = int(_getfloat(sec, "n_elements", "numerical",
                                        default=opts.n_elements))
        opts.grading = sec.get("grading", opts.grading)
        opts.tol = _getfloat(sec, "tol", "numerical", default=opts.tol)
        opts.eps_star = _getfloat(sec, "eps_star", "numerical", default=None)
        opts.n_modes = int(_getfloat(sec, "n_modes", "numerical",
                                     default=opts.n_modes))
        opts.lambda_grid_points = int(_getfloat(
            sec, "lambda_grid_points", "numerical",
            default=opts.lambda_grid_points))
        if opts.tol <= 0 or opts.n_elements < 4 or opts.n_modes < 1:
            raise ConfigError("numerical values out of range")

    out_dir = "."
    if "output" in cp:
        out_dir = cp["output"].get("directory", ".")
    return RunConfig(profile=profile, k_values=k_values, g=g, mu=mu,
                     k_split=k_split, opts=opts, out_dir=out_dir)


def _write_csv(path, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dispersion_rows(cfg, k, dump_dir=None):
    pipe = Pipeline(cfg.profile, cfg.params_for(k), cfg.opts)
    points = pipe.dispersion()
    count = pipe.count_modes()
    rows = []
    for p in sorted(points, key=lambda p: (p.n, -p.lam)):
        rows.append([f"{k:.12g}", p.n, f"{p.lam:.12e}", f"{p.residual:.3e}",
                     f"{p.margin:.6e}", count.N])
    if dump_dir:
        from .assembly import dump_forms
        lam = max(points, key=lambda p: p.lam).lam
        dump_forms(pipe.builder(lam).forms,
                   os.path.join(dump_dir, f"forms_k{k:g}.txt"))
    return rows


def cmd_dispersion(cfg, out_dir, threads, dump_dir=None):
    header = ["k", "n", "lambda_n", "residual", "coercivity_margin",
              "N_eps_star"]
    ks = cfg.k_values
    if threads != 1 and len(ks) > 1:
        workers = threads if threads > 0 else min(len(ks), os.cpu_count() or 1)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            all_rows = list(pool.map(
                lambda k: _dispersion_rows(cfg, k, dump_dir), ks))
    else:
        all_rows = [_dispersion_rows(cfg, k, dump_dir) for k in ks]
    rows = [r for rs in all_rows for r in rs]
    path = os.path.join(out_dir, "dispersion.csv")
    _write_csv(path, header, rows)
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_modes(cfg, out_dir, threads):
    k = cfg.k_values[0]
    pipe = Pipeline(cfg.profile, cfg.params_for(k), cfg.opts)
    points = pipe.dispersion()
    best = {}
    for p in points:
        if p.n not in best or p.lam > best[p.n].lam:
            best[p.n] = p
    for n, p in sorted(best.items()):
        mode = pipe.mode(p)
        if cfg.profile.kind == COMPACT:
            reach = 8.0 / pipe.params.k
            lo, hi = mode.x_minus - reach, mode.x_plus + reach
        else:
            lo = pipe.setup.X_min + 1e-9
            hi = pipe.setup.X_max - 1e-9
        xs = np.linspace(lo, hi, 2001)
        f = reconstruct_fields(mode, cfg.profile, pipe.params, xs)
        rows = np.column_stack([f.x, f.phi, f.dphi, f.d2phi, f.d3phi,
                                f.zeta, f.psi, f.theta, f.q])
        path = os.path.join(out_dir, f"mode_{n}.csv")
        _write_csv(path, ["x", "phi", "dphi", "d2phi", "d3phi",
                          "zeta", "psi", "theta", "q"],
                   [[f"{v:.12e}" for v in row] for row in rows])
        print(f"wrote {path} (lambda_{n} = {p.lam:.9e})")
    return 0


def cmd_outer_coeffs(cfg, out_dir, threads):
    k = cfg.k_values[0]
    pipe = Pipeline(cfg.profile, cfg.params_for(k), cfg.opts).build()
    par = pipe.params
    grid = np.linspace(pipe.eps_star, pipe.bounds.lambda_max, 8)
    rows = []
    if cfg.profile.kind == COMPACT:
        for lam in grid:
            for c in pipe.boundary_coeffs(lam):
                sig = float(_sigma0(cfg.profile.rho(c.x), par, lam))
                disc = (c.n11 - c.n22 - par.k**2 - sig**2)**2 \
                    + 4 * c.n12 * c.n21
                rows.append([c.end, f"{c.x:.9e}", f"{lam:.9e}",
                             *(f"{v:.12e}" for v in c.as_tuple()),
                             f"{disc:.12e}"])
    else:
        from .outer_general import boundary_coeffs_general
        for lam in grid:
            sols = pipe.engine.solve(lam)
            for end, edges in (("left", pipe.setup.left_edges[::6][::-1]),
                               ("right", pipe.setup.right_edges[::6])):
                for x_end in edges:
                    c = boundary_coeffs_general(sols[end], x_end, end)
                    sig = float(_sigma0(cfg.profile.rho(x_end), par, lam))
                    disc = (c.n11 - c.n22 - par.k**2 - sig**2)**2 \
                        + 4 * c.n12 * c.n21
                    rows.append([end, f"{x_end:.9e}", f"{lam:.9e}",
                                 *(f"{v:.12e}" for v in c.as_tuple()),
                                 f"{disc:.12e}"])
    path = os.path.join(out_dir, "outer_coeffs.csv")
    _write_csv(path, ["end", "x_end", "lambda", "n11", "n12", "n21", "n22",
                      "discriminant"], rows)
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_oracle(cfg, out_dir, threads):
    k = cfg.k_values[0]
    pipe = Pipeline(cfg.profile, cfg.params_for(k), cfg.opts)
    lo = pipe.eps_star
    grid = np.linspace(lo, pipe.bounds.lambda_max, 65)
    rows = []
    for lam in grid:
        s = evans_function(cfg.profile, pipe.params, lam)
        rows.append([f"{lam:.12e}", f"{s.sign:+.0f}", f"{s.log_magnitude:.9e}"])
    path = os.path.join(out_dir, "oracle.csv")
    _write_csv(path, ["lambda", "sign", "log_magnitude"], rows)
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_verify(cfg, out_dir, threads, seed=0):
    k = cfg.k_values[0]
    pipe = Pipeline(cfg.profile, cfg.params_for(k), cfg.opts)
    results = run_verification(pipe, seed=seed)
    print(format_results(results))
    return 0 if all(ok for _, ok, _ in results) else 1


_COMMANDS = {
    "dispersion": cmd_dispersion,
    "modes": cmd_modes,
    "outer-coeffs": cmd_outer_coeffs,
    "oracle": cmd_oracle,
    "verify": cmd_verify,
}


def run(command, cfg, out_dir=None, threads=0, seed=0, dump_matrices=False):
    """Dispatch one command on a parsed config; returns the exit code."""
    if command not in _COMMANDS:
        raise ConfigError(f"unknown command {command!r}; "
                          f"choose from {sorted(_COMMANDS)}")
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    if command == "verify":
        return cmd_verify(cfg, out_dir, threads, seed=seed)
    if command == "dispersion":
        return cmd_dispersion(cfg, out_dir, threads,
                              dump_dir=out_dir if dump_matrices else None)
    return _COMMANDS[command](cfg, out_dir, threads)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="rtspect",
        description="Growth rates and normal modes of the viscous "
                    "Rayleigh-Taylor problem for increasing density profiles.")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to the config file")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=0,
                        help="k-grid fan-out (0 = auto)")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for randomized probes in verify")
    parser.add_argument("--dump-matrices", action="store_true",
                        help="debug: dump assembled matrices as text triplets")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
        return run(args.command, cfg, args.out, args.threads, args.seed,
                   dump_matrices=args.dump_matrices)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (SolverError, ValueError) as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
