"""Borel-Laplace resummation of singularly perturbed ODEs from the command line.

Verbs: ``validate``, ``formal``, ``gevrey``, ``borel``, ``resum``, ``verify``
and ``pipeline`` (all stages in order).  Exit status 1 means the problem
violates a hypothesis, 2 a numerical failure (non-convergence, ħ outside the
Borel disc), 3 an oracle or cross-check disagreement.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .exceptions import BorelsumError, OracleDisagreement, ValidationError
from .validation import check_positive, parse_complex_list

log = logging.getLogger("borelsum")

VERBS = ("validate", "formal", "gevrey", "borel", "resum", "verify", "pipeline")
DEFAULT_HBARS = "0.05,0.1"


@dataclass
class RunConfig:
    command: str
    config: Optional[str] = None
    out: str = "borelsum_out"
    nmax: int = 12
    degree: int = 64
    grid_h: Optional[float] = None
    xi_max: Optional[float] = None
    hbar: List[complex] = field(default_factory=lambda: parse_complex_list(DEFAULT_HBARS))
    x: Optional[List[complex]] = None
    tol: float = 1e-10
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.command not in VERBS:
            raise ValidationError(f"unknown command {self.command!r}; expected one of {VERBS}")
        if self.command != "verify" and self.config is None:
            raise ValidationError(f"command {self.command!r} needs --config")
        check_positive("nmax", self.nmax, integer=True)
        check_positive("degree", self.degree, integer=True)
        check_positive("grid-h", self.grid_h, allow_none=True)
        check_positive("xi-max", self.xi_max, allow_none=True)
        check_positive("tol", self.tol)
        check_positive("threads", self.threads, integer=True)
        if self.seed < 0:
            raise ValidationError("seed must be nonnegative")

    def manifest(self) -> dict:
        import mpmath
        import scipy
        import sklearn
        import sympy
        d = asdict(self)
        d["hbar"] = [[h.real, h.imag] for h in self.hbar]
        d["x"] = None if self.x is None else [[v.real, v.imag] for v in self.x]
        return {
            "config": d,
            "problem_file": None if self.config is None else Path(self.config).read_text(),
            "versions": {"borelsum": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__,
                         "scikit-learn": sklearn.__version__, "mpmath": mpmath.__version__,
                         "sympy": sympy.__version__},
            "seed": self.seed,
        }


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="borelsum", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=VERBS)
    p.add_argument("--config", help="problem file (INI)")
    p.add_argument("--out", default="borelsum_out", help="output directory")
    p.add_argument("--nmax", type=int, default=12, help="formal order")
    p.add_argument("--degree", type=int, default=64, help="Chebyshev degree")
    p.add_argument("--grid-h", type=float, default=None, help="Borel grid spacing")
    p.add_argument("--xi-max", type=float, default=None, help="Laplace cutoff")
    p.add_argument("--hbar", default=DEFAULT_HBARS, help="comma separated ħ values")
    p.add_argument("--x", default=None, help="comma separated evaluation points")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="BLAS/FFT thread limit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.write_text(text)
    return path


def stage_validate(cfg: RunConfig, out: Path):
    from .problem import load_problem, validate_problem
    spec = load_problem(cfg.config)
    report = validate_problem(spec)
    _write(out, "validation.txt", report.summary() + "\n")
    print(report.summary())
    if not report.passed:
        raise ValidationError(report.diagnostics[0])
    return spec


def stage_formal(cfg: RunConfig, out: Path, spec):
    from .formal import formal_solution, substitution_residual
    from .gevrey import gevrey_fit
    sol = formal_solution(spec, nmax=cfg.nmax, degree=cfg.degree)
    sol.to_csv(out / "formal_coefficients.csv")
    sol.sup_norm_csv(out / "formal_norms.csv")
    fit = gevrey_fit(sol.norms_at(spec.x0))
    res = substitution_residual(sol)
    scale = np.maximum(1.0, sol.sup_norms())[:, None, None]
    rel = float(np.max(np.abs(res) / scale))
    lines = [f"Gevrey fit at x0: C = {fit.C:.10g}, M = {fit.M:.10g}",
             f"flags: {', '.join(fit.flags) or 'none'}",
             f"substitution residual (relative): {rel:.3e}"]
    _write(out, "formal_report.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    return sol


def stage_gevrey(cfg: RunConfig, out: Path, est):
    from .gevrey import certify_bound, ift_radius, majorant_sequence
    c = est.constants_
    params = {"B": c["B"], "C": c["C"]}
    seq = majorant_sequence("borel", params, max(40, cfg.nmax), est.spec_.N)
    seq.to_csv(out / "majorant.csv")
    radius = ift_radius("borel", params)
    cert = certify_bound(seq, radius)
    lines = [f"majorant constants: B = {c['B']:.10g}, C = {c['C']:.10g}, L = {c['L']:g}",
             f"IFT radius t* = {radius.tstar:.12g} (M = 1/t* = {radius.Mbound:.10g})",
             f"certificate: M_n <= D (1/t*)^n with D = {cert.D:.10g}: "
             f"{'holds' if cert.passed else 'FAILS'}",
             f"final ratio M_(n+1)/M_n = {cert.final_ratio:.10g} "
             f"(relative gap to 1/t*: {cert.ratio_error:.3e})"]
    _write(out, "gevrey_report.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    if not cert.passed:
        raise OracleDisagreement("majorant sequence exceeds its certified geometric bound")
    return cert


def _fit(cfg: RunConfig, spec):
    from .estimator import BorelLaplaceSolver
    hmax = max(abs(h) for h in cfg.hbar)
    est = BorelLaplaceSolver(nmax=cfg.nmax, degree=cfg.degree, grid_h=cfg.grid_h,
                             xi_max=cfg.xi_max, tol=cfg.tol, hbar_max=hmax)
    return est.fit(spec)


def stage_borel(cfg: RunConfig, out: Path, est):
    fld = est.field_
    g = fld.geometry
    stride = max(1, g.T // 64)
    fld.to_csv(out / "sigma.csv", stride=stride)
    lines = [f"grid: h = {g.h:.6g}, xi_max = {g.xi_max:.6g}, rows = {g.Jmax + 1}, "
             f"Laplace rows = {g.Jx + 1} (CSV stride {stride})",
             f"growth fit: |sigma| <= D exp(K xi), D = {est.growth_.D:.10g}, K = {est.growth_.K:.10g}"]
    if est.successive_ is not None:
        s = est.successive_
        lines.append(f"successive approximations: {s.n_terms} terms, tail {s.tail:.3e}, "
                     f"max |sum - march| = {s.march_difference:.3e}")
        with open(out / "term_norms.csv", "w") as fh:
            fh.write("n,sup_norm,term_constant\n")
            for n, (a, b) in enumerate(zip(s.norms, s.term_constants)):
                fh.write(f"{n},{a!r},{b!r}\n")
    _write(out, "borel_report.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))


def _default_xs(est, n: int = 5):
    lo, hi = est.realized_range()
    t = np.linspace(0.1, 0.9, n)
    return list(lo + t * (hi - lo))


def stage_resum(cfg: RunConfig, out: Path, est):
    from .resum import resum_csv
    xs = cfg.x if cfg.x is not None else _default_xs(est)
    vals = est.resum(xs, cfg.hbar)
    resum_csv(out / "resum.csv", xs, cfg.hbar, vals)
    worst = max(rv.error for row in vals for rv in row)
    print(f"resummed {len(xs)} x-points x {len(cfg.hbar)} hbar values; max error budget {worst:.3e}")
    return xs, vals


def ode_residual(est, x, hbar, dx: float = 0.02, npts: int = 9) -> float:
    """``|ħ f' - F(x, ħ, f)|`` with ``f'`` from a polynomial fit of resummed values."""
    from .problem import eval_F
    xs = np.asarray(x) + dx * np.linspace(-1, 1, npts)
    vals = np.array([row[0].value for row in est.resum(list(xs), [hbar])])
    t = np.linspace(-1, 1, npts)
    deriv = np.array([np.polynomial.polynomial.polyfit(t, vals[:, i], npts - 1)[1] / dx
                      for i in range(vals.shape[1])])
    f = vals[npts // 2]
    return float(np.max(np.abs(hbar * deriv - eval_F(est.spec_, x, hbar, f))))


def stage_checks(cfg: RunConfig, out: Path, est, xs) -> List[str]:
    """Problem-level checks used by ``pipeline``; returns failure messages."""
    from .formal import substitution_residual
    fails = []
    lines = []
    res = substitution_residual(est.formal_)
    scale = np.maximum(1.0, est.formal_.sup_norms())[:, None, None]
    rel = float(np.max(np.abs(res) / scale))
    lines.append(f"formal substitution residual {rel:.3e}")
    if rel > 1e-8:
        fails.append("formal substitution residual above 1e-8")
    lines.append(f"standard-form cancellation {est.standard_.cancellation:.3e}")
    if est.successive_ is not None:
        lines.append(f"successive vs march {est.successive_.march_difference:.3e}")
    for hb in cfg.hbar:
        for x in xs[1:-1] if len(xs) > 2 else xs:
            r = ode_residual(est, x, hb)
            lines.append(f"ODE residual at x = {complex(x):.6g}, hbar = {complex(hb):.4g}: {r:.3e}")
            if r > 1e-6:
                fails.append(f"ODE residual {r:.3e} > 1e-6 at x = {x}, hbar = {hb}")
    _write(out, "checks.txt", "\n".join(lines + [f"FAIL: {f}" for f in fails]) + "\n")
    print("\n".join(lines))
    return fails


def stage_verify(cfg: RunConfig, out: Path) -> List[str]:
    """Full harness: property suite plus oracle comparisons."""
    from .formal import formal_solution
    from .oracles import oracle_linear, oracle_riccati, run_property_suite
    fails = []
    report = run_property_suite(cfg.seed)
    lines = [report.summary()]
    if not report.passed:
        fails.append(f"{len(report.failures)} property cases failed")
    lin = oracle_linear(window=(1.0, 2.0))
    sol = formal_solution(lin.spec, nmax=12, degree=cfg.degree)
    nodes = sol.nodes.real
    err = max(float(np.max(np.abs(sol.coeffs[n].values[:, 0] - lin.f_numeric(n)(nodes))
                           / np.abs(lin.f_numeric(n)(nodes)))) for n in range(13))
    lines.append(f"linear oracle formal coefficients n <= 12: max relative error {err:.3e}")
    if err > 1e-10:
        fails.append("linear formal recursion disagrees with the symbolic oracle")
    ric = oracle_riccati(window=(1.0, 2.0))
    sol = formal_solution(ric.spec, nmax=6, degree=cfg.degree)
    nodes = sol.nodes.real
    err = max(float(np.max(np.abs(sol.coeffs[n].values[:, 0] - ric.f_numeric(n)(nodes))
                           / np.abs(ric.f_numeric(n)(nodes)))) for n in range(7))
    lines.append(f"Riccati substitution oracle n <= 6: max relative error {err:.3e}")
    if err > 1e-9:
        fails.append("nonlinear formal recursion disagrees with the substitution oracle")
    _write(out, "verify_report.txt", "\n".join(lines + [f"FAIL: {f}" for f in fails]) + "\n")
    print("\n".join(lines))
    return fails


# ---------------------------------------------------------------------------

def run(cfg: RunConfig) -> int:
    from threadpoolctl import threadpool_limits
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(cfg.manifest(), indent=2, sort_keys=True) + "\n")
    with threadpool_limits(limits=cfg.threads):
        fails: List[str] = []
        if cfg.command == "verify":
            fails = stage_verify(cfg, out)
        else:
            spec = stage_validate(cfg, out)
            if cfg.command == "formal":
                stage_formal(cfg, out, spec)
            elif cfg.command != "validate":
                if cfg.command == "pipeline":
                    stage_formal(cfg, out, spec)
                est = _fit(cfg, spec)
                if cfg.command in ("gevrey", "pipeline"):
                    stage_gevrey(cfg, out, est)
                if cfg.command in ("borel", "pipeline"):
                    stage_borel(cfg, out, est)
                if cfg.command in ("resum", "pipeline"):
                    xs, _ = stage_resum(cfg, out, est)
                if cfg.command == "pipeline":
                    fails = stage_checks(cfg, out, est, xs)
        if fails:
            raise OracleDisagreement("; ".join(fails))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig(command=args.command, config=args.config, out=args.out, nmax=args.nmax,
                        degree=args.degree, grid_h=args.grid_h, xi_max=args.xi_max,
                        hbar=parse_complex_list(args.hbar),
                        x=None if args.x is None else parse_complex_list(args.x),
                        tol=args.tol, seed=args.seed, threads=args.threads)
        return run(cfg)
    except BorelsumError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
