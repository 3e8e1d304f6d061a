"""Batch driver: ``patternspectra <command> --config run.yaml --out DIR``.

Exit codes: 0 all checks passed, 1 a numerical check failed, 2 bad input, 3 internal error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__, bloch, modulation, simulator
from . import multiplier_decay as md
from .config import RunConfig, SUITES, load_config, save_config
from .errors import InputError, MissingArtifact, NumericalFailure
from .field2d import Grid2D, PeriodicField
from .model import brusselator_state, make_system
from .profile import constant_wave, load_wave, save_wave, solve_profile, turing_square_seed, wave_derivatives

log = logging.getLogger("patternspectra")

WAVE_FILE = "wave.npz"
CACHE_ENV = "PATTERNSPECTRA_CACHE"


class CheckFailed(Exception):
    """A command ran to completion but one of its numerical checks did not pass."""


# ------------------------------------------------------------ helpers


def _system(cfg: RunConfig, overrides=None):
    params = dict(cfg.model.get("params", {}))
    params.update(overrides or {})
    return make_system(cfg.model["name"], **params)


def _state(cfg: RunConfig):
    if cfg.seed.state is not None:
        return np.asarray(cfg.seed.state, float)
    if cfg.model["name"].startswith("brusselator"):
        p = cfg.model.get("params", {})
        return brusselator_state(p.get("a", 1.0), p.get("b", 5.0))
    raise InputError("seed.state is required for this model")


def plane_wave_seed(sys, grid: Grid2D, K, eps: float = 0.1) -> PeriodicField:
    """Crossed plane waves for the paired Ginzburg-Landau model, slightly perturbed."""
    mu = sys.params.get("mu", 1.0)
    g = sys.params.get("g", 0.2)
    k2 = float((2 * np.pi * np.linalg.norm(np.asarray(K)[:, 0])) ** 2)
    if k2 >= mu:
        raise InputError(f"wavenumber^2 {k2:.3g} is outside the existence band (< mu = {mu})")
    r = np.sqrt((mu - k2) / (1 + g))
    x1, x2 = grid.x
    vals = np.stack([(1 + eps) * r * np.cos(2 * np.pi * x1), r * np.sin(2 * np.pi * x1) + 0.1 * eps * np.cos(2 * np.pi * x2),
                     r * np.cos(2 * np.pi * x2), r * np.sin(2 * np.pi * x2)])
    return PeriodicField.from_values(grid, vals, real=True)


def build_wave(cfg: RunConfig):
    sys_ = _system(cfg)
    grid = Grid2D(cfg.N)
    K = np.asarray(cfg.K, float)
    kind = cfg.seed.kind
    tol = cfg.tolerances.newton_tol
    if kind == "constant":
        return constant_wave(sys_, grid, _state(cfg), K, cfg.c)
    if kind == "turing":
        seed = turing_square_seed(sys_, grid, _state(cfg), K, cfg.seed.eps, cfg.c)
    elif kind == "plane_waves":
        seed = plane_wave_seed(sys_, grid, K, cfg.seed.eps)
    else:
        raise InputError(f"unknown seed kind {kind!r}")
    wd = solve_profile(sys_, K, seed, c_seed=cfg.c, tol=tol)
    for step in cfg.seed.continuation:
        sys_ = _system(cfg, step)
        wd = solve_profile(sys_, K, wd.U, c_seed=wd.c, tol=tol)
    return wave_derivatives(wd)


def _archive_path(cfg: RunConfig, out: Path, archive=None) -> Path:
    if archive:
        return Path(archive)
    return out / WAVE_FILE


def _cache_path(cfg: RunConfig):
    root = os.environ.get(CACHE_ENV)
    if not root:
        return None
    key = json.dumps({k: cfg.to_dict()[k] for k in ("model", "N", "K", "c", "seed", "tolerances")}, sort_keys=True)
    return Path(root) / f"wave-{hashlib.sha256(key.encode()).hexdigest()[:16]}.npz"


def _wave(cfg: RunConfig, out: Path, archive=None):
    path = _archive_path(cfg, out, archive)
    if not path.exists():
        raise MissingArtifact(f"{path} not found; run the profile command first")
    wd = load_wave(path)
    if wd.dKU is None and not wd.constant:
        raise MissingArtifact(f"{path} has no K-derivatives")
    return wd


def _modulation(cfg: RunConfig, out: Path, archive=None):
    if cfg.modulation is not None:
        m = {k: np.asarray(v, float) for k, v in cfg.modulation.items()}
        try:
            return modulation.modulation_system(m["A1"], m["A2"], m["B11"], m["B12"], m["B22"]), None
        except KeyError as exc:
            raise InputError(f"modulation block needs {exc}") from None
    wd = _wave(cfg, out, archive)
    t = cfg.tolerances
    exp = bloch.expand_symbol(wd, h=t.h)
    Lam = modulation.lambda_coeffs(wd)
    return modulation.from_expansion(exp, Lam, wd.K), wd


def _dump(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    return str(o)


# ------------------------------------------------------------ commands


def cmd_profile(cfg: RunConfig, out: Path, args) -> dict:
    cache = _cache_path(cfg)
    target = out / WAVE_FILE
    if cache is not None and cache.exists():
        shutil.copyfile(cache, target)
        wd = load_wave(target)
        log.info("reused cached wave %s", cache)
    else:
        wd = build_wave(cfg)
        save_wave(target, wd, {"name": cfg.model["name"], "params": cfg.model.get("params", {})})
        if cache is not None:
            cache.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(target, cache)
    info = {"residual_norm": wd.residual_norm, "c": wd.c, "Omega": wd.Omega,
            "derivative_check": wd.derivative_check}
    print(f"profile: residual {wd.residual_norm:.2e}, c = {np.round(wd.c, 10).tolist()}")
    return info


def cmd_spectrum(cfg: RunConfig, out: Path, args) -> dict:
    wd = _wave(cfg, out, args.archive)
    g = np.linspace(-np.pi, np.pi, 9)
    sl = bloch.spectrum_slice(wd, [(a, b) for a in g for b in g])
    bloch.write_spectrum_csv(out / "spectrum.csv", sl)
    d2 = bloch.check_D2(wd, tol=cfg.tolerances.gap_tol)
    # sampled indicator only: no eigenvalue to the right of the imaginary axis
    d1 = bool(sl.max_re <= cfg.tolerances.gap_tol)
    report = {"max_re": sl.max_re, "D1_indicator": d1, "D2": d2}
    _dump(out / "spectrum.json", report)
    print(f"spectrum: max Re = {sl.max_re:.3e} ({'ok' if d1 else 'UNSTABLE'}), "
          f"translation kernel {'ok' if d2['passed'] else 'FAILED'}")
    if not d1:
        raise CheckFailed(f"unstable spectrum, max Re = {sl.max_re:.3e}")
    if not d2["passed"]:
        raise CheckFailed(d2.get("reason", "kernel check failed"))
    return report


def cmd_classify(cfg: RunConfig, out: Path, args) -> dict:
    ms, _ = _modulation(cfg, out, args.archive)
    modulation.write_report(out / "modulation.json", ms)
    print(ms.tag)
    return ms.report()


def cmd_whitham(cfg: RunConfig, out: Path, args) -> dict:
    ms, _ = _modulation(cfg, out, args.archive)
    lam0 = modulation.build_lambda0(ms)
    rng = np.random.default_rng(cfg.rng_seed)
    xi = rng.standard_normal((1000, 2))
    defect = max(modulation.commutator_defect(lam0, x) for x in xi)
    if lam0.kind == "angular":
        modulation.write_angular_csv(out / "angular.csv", lam0.table)
    report = dict(ms.report(), lambda0_kind=lam0.kind, commutator_defect=defect)
    _dump(out / "whitham.json", report)
    print(f"whitham: {ms.tag}, {lam0.kind} operator, commutator defect {defect:.2e}")
    if defect > 1e-10:
        raise CheckFailed(f"commutator defect {defect:.2e}")
    return report


def cmd_decay(cfg: RunConfig, out: Path, args) -> dict:
    suite = args.suite or cfg.suite
    times = md.DYADIC[3:10] if suite != "quick" else md.DYADIC[3:8]
    results = md.run_suite(times)
    extra = {}
    if suite == "full":
        extra["counterexample"] = md.benchmark_counterexample()
        extra["highfreq_heat"] = md.highfreq_decay(md.heat(cutoff=0.5, highfreq=True)).to_dict()
    md.write_suite_report(out / "decay.json", results)
    if extra:
        _dump(out / "decay_extra.json", extra)
    width = max(len(r.name) for r in results)
    for r in results:
        flag = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  fitted {r.fitted:7.4f}  predicted {r.predicted:6.3f} +- {r.tol:<5}  {flag}")
    if not all(r.passed for r in results):
        raise CheckFailed("decay benchmarks out of tolerance")
    return {"benchmarks": [r.to_dict() for r in results], **extra}


def cmd_simulate(cfg: RunConfig, out: Path, args) -> dict:
    wd = _wave(cfg, out, args.archive)
    s = cfg.simulate
    xi = [2 * np.pi * np.asarray(j, float) / s.m for j in s.xi] or \
        [2 * np.pi * np.array(j, float) / s.m for j in ((0, 0), (1, 0), (0, 1), (1, 1))]
    growth = simulator.bloch_growth_validation(wd, xi, eps=s.eps, m=s.m, T=s.T, dt=s.dt, stepper=s.stepper)
    worst = max(g.error for g in growth)
    report = {"growth": [{"xi": g.xi, "measured": g.measured, "eigenvalue": g.eigenvalue, "error": g.error}
                         for g in growth], "max_error": worst}
    if not wd.constant:
        ms, _ = _modulation(cfg, out, args.archive)
        res = simulator.run_comparison(wd, ms, s.source, s.compare_T, m=s.compare_m, dt=s.dt * 5,
                                       stepper=s.stepper)
        simulator.write_diagnostics_csv(out / "diagnostics.csv", res)
        report["comparison"] = {"times": res.times, "t_cut": res.t_cut}
    _dump(out / "simulate.json", report)
    print(f"simulate: {len(growth)} growth rates, max |measured - eigenvalue| = {worst:.2e}")
    if worst > 1e-3:
        raise CheckFailed(f"growth-rate mismatch {worst:.2e}")
    return report


COMMANDS = {
    "profile": cmd_profile,
    "spectrum": cmd_spectrum,
    "classify": cmd_classify,
    "whitham": cmd_whitham,
    "decay": cmd_decay,
    "simulate": cmd_simulate,
}


def _versions() -> dict:
    import scipy
    import yaml
    return {"patternspectra": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pyyaml": yaml.__version__}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="patternspectra", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="YAML run configuration (defaults are used when omitted)")
    ap.add_argument("--out", default=None, help="output directory (overrides the config)")
    ap.add_argument("--threads", type=int, default=None, help="worker threads for numerical libraries")
    ap.add_argument("--suite", choices=SUITES, default=None, help="benchmark selection for decay")
    ap.add_argument("--archive", default=None, help="wave archive (default OUT/wave.npz)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be positive", file=sys.stderr)
            return 2
        from threadpoolctl import threadpool_limits
        threadpool_limits(args.threads)
    try:
        cfg = load_config(args.config) if args.config else RunConfig().validate()
        out = Path(args.out or cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        save_config(out / "config.yaml", cfg)
        status, message = 0, "ok"
        try:
            COMMANDS[args.command](cfg, out, args)
        except (CheckFailed, NumericalFailure) as exc:
            status, message = 1, f"{type(exc).__name__}: {exc}"
            print(f"check failed: {message}", file=sys.stderr)
        manifest = {"command": args.command, "config_sha256": cfg.digest(), "versions": _versions(),
                    "rng_seed": cfg.rng_seed, "tolerances": cfg.to_dict()["tolerances"],
                    "status": status, "message": message}
        simulator.write_manifest(out / f"manifest_{args.command}.json", manifest)
        return status
    except InputError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
