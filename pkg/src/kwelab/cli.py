"""Command-line harness: kwelab <subcommand> --config PATH --out DIR [--workers N] [--seed S].

Config files are plain text, one ``key = value`` per line, ``#`` starts a
comment.  Every run copies the config verbatim into the output directory and
writes ``manifest.json`` with the config hash, the package version and the
wall time.  Each CSV starts with a ``# config_hash=...`` line.

Exit codes: 0 success, 1 usage, 2 numeric failure, 3 resource cap.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainError, InvariantError, NumericError, ResourceError

log = logging.getLogger("kwelab")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_RESOURCE = 0, 1, 2, 3

SUBCOMMANDS = ("simulate", "iterates", "diagrams", "amplitudes", "kwe", "compare", "selftest")

REQUIRED = {
    "simulate": ("eps", "gamma|lambda", "ensemble_size", "t_final|times"),
    "iterates": ("eps", "gamma|lambda", "ensemble_size", "t_final|times"),
    "diagrams": ("n",),
    "amplitudes": ("eps", "gamma|lambda", "n", "t_final|times"),
    "kwe": ("h", "t_final", "dt"),
    "compare": ("eps", "gamma|lambda", "ensemble_size", "t_final"),
    "selftest": (),
}

KNOWN_KEYS = {
    "d", "eps", "gamma", "lambda", "modes_per_dim", "seed", "ensemble_size", "t_final", "dt", "times",
    "n", "N", "quad_dt", "rule", "freq_cap", "methods", "eta", "h", "profile_radius", "profile_height",
    "json", "batch_size", "control", "sign", "hq", "save_every",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def parse_config(text: str) -> dict:
    """key = value lines into a dict of strings; rejects malformed lines and unknown keys."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        if key in cfg:
            raise UsageError(f"config line {lineno}: duplicate key {key!r}")
        cfg[key] = value
    return cfg


def check_required(sub: str, cfg: dict) -> None:
    missing = []
    for req in REQUIRED[sub]:
        if not any(k in cfg for k in req.split("|")):
            missing.append(req.replace("|", " or "))
    if missing:
        raise UsageError(f"{sub}: missing required config keys: {', '.join(missing)} "
                         f"(required: {', '.join(r.replace('|', ' or ') for r in REQUIRED[sub]) or 'none'})")
    if "gamma" in cfg and "lambda" in cfg:
        raise UsageError("give either 'gamma' or 'lambda', not both")


def _get(cfg, key, kind, default=None):
    if key not in cfg:
        if default is None:
            raise UsageError(f"missing config key {key!r}")
        return default
    raw = cfg[key]
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is float and "/" in raw:
            a, b = raw.split("/", 1)
            return float(a) / float(b)
        return kind(raw)
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot read {raw!r} as {kind.__name__}") from None


def _times(cfg) -> list:
    if "times" in cfg:
        try:
            return [float(eval_fraction(x)) for x in cfg["times"].split(",") if x.strip()]
        except ValueError:
            raise UsageError(f"config key 'times': cannot parse {cfg['times']!r}") from None
    return [_get(cfg, "t_final", float)]


def eval_fraction(s: str) -> float:
    s = s.strip()
    if "/" in s:
        a, b = s.split("/", 1)
        return float(a) / float(b)
    return float(s)


def _params(cfg):
    from .params_grid import make_params, params_from_lambda

    d = _get(cfg, "d", int, 2)
    eps = _get(cfg, "eps", float)
    if "gamma" in cfg:
        return make_params(eps, _get(cfg, "gamma", float), d)
    return params_from_lambda(eps, _get(cfg, "lambda", float), d)


def _profile(cfg):
    from .random_data import bump_profile

    return bump_profile(_get(cfg, "profile_radius", float, 1.0), _get(cfg, "profile_height", float, 1.0))


def _grid(cfg, params, profile):
    from .params_grid import TorusGrid, grid_for

    if "modes_per_dim" in cfg:
        return TorusGrid(params.d, _get(cfg, "modes_per_dim", int), params.eps)
    return grid_for(params.eps, profile.support_radius, params.d)


class _Writer:
    """Collects output files and stamps them with the config hash."""

    def __init__(self, out: Path, config_hash: str):
        self.out = out
        self.hash = config_hash
        self.files = []

    def csv(self, name: str, header, rows) -> Path:
        path = self.out / name
        with open(path, "w", newline="") as fh:
            fh.write(f"# config_hash={self.hash}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(x) for x in r])
        self.files.append(name)
        return path

    def json(self, name: str, obj) -> Path:
        path = self.out / name
        body = {"config_hash": self.hash, **obj}
        path.write_text(json.dumps(body, indent=2, sort_keys=True, default=_jsonable) + "\n")
        self.files.append(name)
        return path


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return str(x)


# ---------------------------------------------------------------- subcommands

def cmd_simulate(cfg, w: _Writer, workers: int, seed: int) -> dict:
    from .nls_solver import run_ensemble

    params, profile = _params(cfg), _profile(cfg)
    grid = _grid(cfg, params, profile)
    times = _times(cfg)
    dt = _get(cfg, "dt", float, params.t_lin / 20)
    ens = run_ensemble(params, grid, profile, _get(cfg, "ensemble_size", int), times, dt, seed,
                       _get(cfg, "sign", int, 1), _get(cfg, "batch_size", int, 16), workers,
                       _get(cfg, "control", bool, False))
    kv = grid.wavevectors().reshape(params.d, -1).T
    order = np.lexsort(kv.T[::-1])
    rows = []
    for i, t in enumerate(ens.times):
        mean = ens.mean[i].ravel()
        se = ens.stderr[i].ravel() if ens.stderr is not None else np.full(mean.shape, np.nan)
        for j in order:
            if ens.baseline.ravel()[j] == 0 and mean[j] < 1e-300:
                continue
            rows.append([t, *kv[j].tolist(), mean[j], se[j]])
    w.csv("spectrum.csv", ["t"] + [f"k{i + 1}" for i in range(params.d)] + ["mean_abs2", "stderr"], rows)
    return {"mass_drift": ens.mass_drift, "M": grid.M, "ensemble_size": ens.ensemble_size}


def cmd_iterates(cfg, w: _Writer, workers: int, seed: int) -> dict:
    from .duhamel import iterate_moments

    params, profile = _params(cfg), _profile(cfg)
    grid = _grid(cfg, params, profile)
    times = _times(cfg)
    N = _get(cfg, "N", int, 2)
    quad = _get(cfg, "quad_dt", float, params.t_lin / 20)
    m = iterate_moments(params, grid, profile, N, times, _get(cfg, "ensemble_size", int), seed, quad,
                        cfg.get("rule", "trapezoid"), _get(cfg, "batch_size", int, 16))
    rows = []
    for n in range(N + 1):
        for i, t in enumerate(times):
            se = m.stderr[n, i] if m.stderr is not None else float("nan")
            rows.append([n, t, m.mean[n, i], se])
    w.csv("iterates.csv", ["n", "t", "mean_norm2", "stderr"], rows)
    return {"M": grid.M, "N": N}


def cmd_diagrams(cfg, w: _Writer, workers: int, seed: int) -> dict:
    from .diagrams import diagram_counts, diagrams_json

    nmax = _get(cfg, "n", int)
    rows = []
    for n in range(1, nmax + 1):
        c = diagram_counts(n)
        rows.append([n, c["histories"], c["pairings_per_history_pair"], c["paired_diagrams"]])
    w.csv("diagram_counts.csv", ["n", "histories", "pairings_per_history_pair", "paired_diagrams"], rows)
    if _get(cfg, "json", bool, False):
        path = w.out / "diagrams.json"
        path.write_text(diagrams_json(nmax))
        w.files.append("diagrams.json")
    return {"n_max": nmax}


def cmd_amplitudes(cfg, w: _Writer, workers: int, seed: int) -> dict:
    from .amplitudes import diagram_sum

    params, profile = _params(cfg), _profile(cfg)
    n = _get(cfg, "n", int)
    times = _times(cfg)
    methods = tuple(m.strip() for m in cfg.get("methods", "time").split(",") if m.strip())
    fc = _get(cfg, "freq_cap", float, math.inf)
    eta = _get(cfg, "eta", float, math.nan)
    res = diagram_sum(n, times, params, profile, methods, None if math.isinf(fc) else fc,
                      None if math.isnan(eta) else eta)
    rows = []
    for hl, hr, idx, vals, rt in res.rows:
        for (m, t), v in vals.items():
            rows.append([n, "-".join(map(str, hl)), "-".join(map(str, hr)), idx, t, v.real, v.imag, m, rt])
    w.csv("amplitudes.csv", ["n", "history_left", "history_right", "pairing_id", "t", "re", "im", "method",
                             "runtime"], rows)
    total = [[m, t, v.real, v.imag] for (m, t), v in res.total.items()]
    w.csv("amplitude_sums.csv", ["method", "t", "re", "im"], total)
    return {"n": n, "pairs": len(res.rows)}


def cmd_kwe(cfg, w: _Writer, workers: int, seed: int) -> dict:
    from .kwe import density_from_profile, kwe_solve

    profile = _profile(cfg)
    d = _get(cfg, "d", int, 2)
    rho0 = density_from_profile(profile, _get(cfg, "h", float), d)
    traj = kwe_solve(rho0, _get(cfg, "t_final", float), _get(cfg, "dt", float))
    every = _get(cfg, "save_every", int, 1)
    pts = rho0.points().reshape(-1, d)
    rows = []
    for i, (t, st) in enumerate(zip(traj.times, traj.states)):
        if i % every and i != len(traj.times) - 1:
            continue
        v = st.values.ravel()
        for j in np.flatnonzero(v):
            rows.append([t, *pts[j].tolist(), v[j]])
    w.csv("kwe.csv", ["t_kin"] + [f"k{i + 1}" for i in range(d)] + ["rho"], rows)
    report = {"times": traj.times, "mass": traj.mass, "energy": traj.energy, "mass_drift": traj.mass_drift,
              "energy_drift": traj.energy_drift, "rejected_steps": traj.rejected}
    w.json("kwe_report.json", report)
    return {"steps": len(traj.times) - 1}


def cmd_compare(cfg, w: _Writer, workers: int, seed: int) -> dict:
    from .kwe import kinetic_comparison
    from .nls_solver import run_ensemble

    params, profile = _params(cfg), _profile(cfg)
    grid = _grid(cfg, params, profile)
    t = _get(cfg, "t_final", float)
    dt = _get(cfg, "dt", float, params.t_lin / 20)
    ens = run_ensemble(params, grid, profile, _get(cfg, "ensemble_size", int), [t], dt, seed, 1,
                       _get(cfg, "batch_size", int, 16), workers, _get(cfg, "control", bool, True))
    hq = _get(cfg, "hq", float, params.eps)
    rep = kinetic_comparison(ens, params, profile, t, hq=hq)
    order = np.lexsort(rep.ks.T[::-1])
    rows = [[*rep.ks[j].tolist(), rep.residual[j], rep.stderr[j], rep.prediction[j]] for j in order]
    w.csv("comparison.csv", [f"k{i + 1}" for i in range(params.d)] + ["residual", "stderr", "prediction"], rows)
    summary = {"t": t, "eps": params.eps, "lambda": params.lam, "t_kin": params.t_kin, "l1": rep.l1,
               "l1_noise": rep.l1_noise, "scale": rep.scale, "ratio": rep.ratio, "notes": rep.notes,
               "ensemble_size": ens.ensemble_size, "M": grid.M}
    w.json("comparison.json", summary)
    return {"ratio": rep.ratio}


def selftest_checks() -> list:
    """Fast exact and property checks: (name, passed, detail)."""
    from .diagrams import diagram_counts
    from .kwe import collision_at, constant_density, sinc2_selftest
    from .random_data import wick_expectation
    from .simplex import resolvent_integral, simplex_integral
    from .spanning import exhaustive_check

    out = []
    g4 = wick_expectation([0, 0, 0, 0], [False, True, False, True])
    out.append(("wick E|G|^4 = 2", g4 == 2, f"{g4}"))
    rng = np.random.default_rng(0)
    g = (rng.standard_normal((200000, 2)) + 1j * rng.standard_normal((200000, 2))) / np.sqrt(2)
    x = np.abs(g[:, 0]) ** 2 * np.abs(g[:, 1]) ** 2
    ok = abs(x.mean() - wick_expectation([0, 0, 1, 1], [False, True, False, True])) < 4 * x.std() / np.sqrt(len(x))
    out.append(("wick vs Monte Carlo E|G1|^2|G2|^2", bool(ok), f"{x.mean():.4f}"))
    c = diagram_counts(2)
    out.append(("paired diagram count n=2", c["paired_diagrams"] == 1080, str(c["paired_diagrams"])))
    for n in (1, 2):
        r = exhaustive_check(n)
        out.append((f"spanning basis n={n}", r.spanning_ok, f"{r.configurations} configurations"))
        out.append((f"counting identities n={n}", r.counting_ok, f"{r.configurations} configurations"))
    e = np.array([0.0, 3.0, -7.5, 12.25])
    a, b = complex(simplex_integral(e, 0.7)), resolvent_integral(e, 0.7)
    out.append(("resolvent identity m=3", abs(a - b) <= 1e-6 * abs(a), f"{abs(a - b):.2e}"))
    v, _ = collision_at(constant_density(1.0), np.array([[0.1, 0.2]]), 1 / 8, domain=(0.0, 1.0))
    out.append(("collision of a constant", abs(v[0]) < 1e-8, f"{v[0]:.2e}"))
    s = sinc2_selftest()
    out.append(("kernel normalisation = pi", abs(s - math.pi) < 1e-4, f"{s:.6f}"))
    return out


def cmd_selftest(cfg, w: _Writer, workers: int, seed: int) -> dict:
    checks = selftest_checks()
    w.csv("selftest.csv", ["check", "passed", "detail"], [[n, int(p), dtl] for n, p, dtl in checks])
    for n, p, dtl in checks:
        print(f"{'PASS' if p else 'FAIL'}  {n}  ({dtl})")
    failed = [n for n, p, _ in checks if not p]
    if failed:
        raise InvariantError(f"self-test failures: {', '.join(failed)}")
    return {"checks": len(checks)}


COMMANDS = {
    "simulate": cmd_simulate, "iterates": cmd_iterates, "diagrams": cmd_diagrams, "amplitudes": cmd_amplitudes,
    "kwe": cmd_kwe, "compare": cmd_compare, "selftest": cmd_selftest,
}


def config_hash(cfg: dict) -> str:
    canon = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def run(sub: str, config_path: str | None, out_dir: str, workers: int = 1, seed: int | None = None) -> int:
    """Execute one subcommand; returns the exit status."""
    t0 = time.perf_counter()
    try:
        if sub not in COMMANDS:
            raise UsageError(f"unknown subcommand {sub!r}; choose from {', '.join(SUBCOMMANDS)}")
        if config_path is None:
            if REQUIRED[sub]:
                raise UsageError(f"{sub} needs --config; required keys: "
                                 f"{', '.join(r.replace('|', ' or ') for r in REQUIRED[sub])}")
            text = ""
        else:
            try:
                text = Path(config_path).read_text()
            except OSError as exc:
                raise UsageError(f"cannot read config {config_path}: {exc}") from None
        cfg = parse_config(text)
        check_required(sub, cfg)
        if workers < 1:
            raise UsageError("--workers must be at least 1")
        eff_seed = seed if seed is not None else _get(cfg, "seed", int, 0)
        eff = dict(cfg, seed=str(eff_seed))
        h = config_hash(eff)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if config_path is not None:
            shutil.copyfile(config_path, out / "config.txt")
        w = _Writer(out, h)
        info = COMMANDS[sub](cfg, w, workers, eff_seed)
        manifest = {"subcommand": sub, "config_hash": h, "version": __version__, "seed": eff_seed,
                    "workers": workers, "files": w.files, "wall_time_s": time.perf_counter() - t0,
                    "info": info}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")
        return EXIT_OK
    except (UsageError, DomainError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (NumericError, InvariantError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None) -> int:
    p = _Parser(prog="kwelab", description="Random-data cubic NLS, Feynman-diagram expansion and kinetic wave equation")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--out", metavar="DIR", default="kwelab_out")
    p.add_argument("--workers", metavar="N", type=int, default=1)
    p.add_argument("--seed", metavar="S", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    a = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return run(a.subcommand, a.config, a.out, a.workers, a.seed)


if __name__ == "__main__":
    sys.exit(main())
