"""Command line front end: ``kamcap <stage> ...``.

Stages mirror the two halves of the computation (explicit algebra, then
estimates and the final inequality) plus the frequency analysis tools.
Exit codes: 0 success or PROVED, 2 NOT-PROVED, 1 error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction
from importlib import resources

from .formats import Ledger, read_freq, write_certificate, write_freq
from .interval import Interval, IntervalError, iv_from_decimal

log = logging.getLogger("kamcap")

EXIT_OK, EXIT_ERROR, EXIT_NOT_PROVED = 0, 1, 2
DEFAULT_PAIR = ("43/74", "18/31")


class UsageError(Exception):
    pass


# --- configuration -------------------------------------------------------------

def read_config(path) -> dict:
    """key = value lines; '#' starts a comment; values stay strings."""
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key = value")
            k, v = (x.strip() for x in line.split("=", 1))
            out[k.replace("-", "_")] = v.strip('"').strip("'")
    return out


def _pair(spec):
    a, b = spec if isinstance(spec, (list, tuple)) else spec.split()
    fa, fb = Fraction(a), Fraction(b)
    return fa.numerator, fa.denominator, fb.numerator, fb.denominator


def _omega(value, pair):
    from .model import noble_interval
    if value in (None, "", "auto-noble", "noble"):
        return noble_interval(*_pair(pair))
    return iv_from_decimal(value)


def _cf_for(omega: Interval, pair):
    """Continued fraction of the noble number of ``pair``; checks that the
    frequency enclosure is that number."""
    from .estimator import noble_cf
    from .model import noble_interval
    p = _pair(pair)
    ref = noble_interval(*p)
    if not (float(omega.lo) <= float(ref.hi) and float(ref.lo) <= float(omega.hi)):
        raise UsageError("frequency enclosure is not the noble number of the given pair "
                         "(the Diophantine constant needs its continued fraction)")
    return noble_cf(*p)


# --- stages ------------------------------------------------------------------------

def cmd_model(a):
    from .model import ModelConfig, NewtonConfig, build_H0
    pair = a.noble or DEFAULT_PAIR
    cfg = ModelConfig(iv_from_decimal(a.eps), iv_from_decimal(a.Psi), _omega(a.omega, pair),
                      R_I=a.R_I, trunc=a.trunc)
    os.makedirs(a.out_dir, exist_ok=True)
    tfh = os.path.join(a.out_dir, "initial_Ham0.tfh")
    freq = os.path.join(a.out_dir, "freq_intervals")
    _, info = build_H0(cfg, NewtonConfig(max_iters=a.newton_iters), tfh, freq)
    print(f"xi_init {float(info['xi_init'].mid)!r} after {info['iterations']} Newton steps")
    print(f"wrote {tfh} and {freq}")
    return EXIT_OK


def cmd_normalize(a):
    from .normalizer import normalize
    from .tfseries import HamiltonianState, read_tfh, write_tfh
    tfh = a.tfh
    if a.sample:
        tfh = str(resources.files("kamcap") / "data" / "sample.tfh")
        freq = resources.files("kamcap") / "data" / "sample.freq"
    else:
        freq = a.freq
    H, lmax, K, R_I = read_tfh(tfh)
    omega = read_freq(freq)
    R_I = a.R_I or R_I
    st = HamiltonianState.from_series(omega, H, lmax, K, R_I)
    logf = open(a.step_log, "w") if a.step_log else None
    try:
        Hn, _, led = normalize(st, R_I, step_log=logf)
    finally:
        if logf:
            logf.close()
    led.write(a.ledger)
    if a.snapshot:
        write_tfh(a.snapshot, Hn.total(), lmax, K, R_I)
    print(f"m^(R_I) {led.m.to_text()}")
    print(f"wrote {a.ledger}")
    return EXIT_OK


def _estimate(led: Ledger, omega: Interval, R_II: int, pair, cert_path=None, extra=None):
    from .estimator import diophantine_gamma, estimate, log10_interval
    gamma, _ = diophantine_gamma(omega, 1, cf=_cf_for(omega, pair))
    pp, res = estimate(led, omega, R_II, gamma)
    entries = {"omega": omega, "R_I": led.R_I, "R_II": R_II, "K": led.K, "lmax": led.lmax,
               "rho": pp.rho, "sigma": pp.sigma, "lambda": pp.lam, "E": pp.E,
               "gamma": pp.gamma, "tau": pp.tau, "m": pp.m}
    if pp.lambda_star is not None:
        entries["lambda_star"] = pp.lambda_star
        entries["log10_lambda_star"] = "%.4f %.4f" % log10_interval(pp.lambda_star)
    entries["log10_lambda_upper"] = "%.4f" % pp.log10_lambda
    if res is not None:
        entries.update(a_RII=res.params.a, zeta_RII=res.params.zeta, E_RII=res.params.E)
    if extra:
        entries.update(extra)
    notes = [pp.extra["detail"]] if "detail" in pp.extra else []
    if cert_path:
        write_certificate(cert_path, entries, pp.verdict, pp.failing, notes)
    print(f"verdict {pp.verdict}" + (f" (failing: {pp.failing})" if pp.failing else ""))
    print(f"log10 lambda <= {pp.log10_lambda:.3f}")
    if pp.lambda_star is not None:
        print("log10 lambda* in [%.3f, %.3f]" % log10_interval(pp.lambda_star))
    return pp


def cmd_estimate(a):
    led = Ledger.read(a.ledger)
    omega = read_freq(a.freq)
    pp = _estimate(led, omega, a.R_II, a.noble or DEFAULT_PAIR, a.certificate)
    return EXIT_OK if pp.verdict == "PROVED" else EXIT_NOT_PROVED


def cmd_fam(a):
    from . import freqmap
    n_done = [0]

    def prog(i, n):
        if a.verbose and (i % 10 == 0 or i == n):
            print(f"  {i}/{n}", file=sys.stderr)

    samples = freqmap.build_fam(a.psi_from, a.psi_to, a.n, a.eps, not a.no_control,
                                a.periods, a.substeps, a.Psi, progress=prog)
    freqmap.write_csv(a.csv, samples)
    if a.gnuplot:
        freqmap.write_gnuplot(a.gnuplot, a.csv, title=f"eps = {a.eps}")
    for q, (p0, p1) in freqmap.detect_plateaus(samples, a.tol):
        print(f"plateau {q} ({float(q):.7f}) psi0 in [{p0:.7f}, {p1:.7f}]")
    (length, (i, j)), found = freqmap.regular_branch(samples, a.tol)
    if found:
        print(f"monotone branch of {length} samples, psi0 in "
              f"[{samples[i].psi0:.6f}, {samples[j].psi0:.6f}]")
    else:
        print(f"no monotone branch (longest run {length})")
    print(f"wrote {a.csv}")
    return EXIT_OK


def cmd_noble(a):
    from .freqmap import RationalPair, noble_mediant
    x = noble_mediant(RationalPair.parse(a.first, a.second))
    print(f"{x:.{a.digits}f}")
    return EXIT_OK


def cmd_run(a):
    """model -> normalize -> estimate in one working directory."""
    from .model import ModelConfig, NewtonConfig, build_H0
    from .normalizer import normalize
    from .tfseries import write_tfh
    pair = a.noble or DEFAULT_PAIR
    os.makedirs(a.workdir, exist_ok=True)
    p = lambda name: os.path.join(a.workdir, name)
    cfg = ModelConfig(iv_from_decimal(a.eps), iv_from_decimal(a.Psi), _omega(a.omega, pair),
                      R_I=a.R_I, trunc=a.trunc)
    with open(p("run_config.json"), "w") as fh:
        json.dump({"eps": a.eps, "Psi": a.Psi, "omega": a.omega or "auto-noble",
                   "noble": list(pair), "R_I": a.R_I, "R_II": a.R_II, "trunc": cfg.trunc},
                  fh, indent=1)
    try:
        st, info = build_H0(cfg, NewtonConfig(max_iters=a.newton_iters),
                            p("initial_Ham0.tfh"), p("freq_intervals"))
    except RuntimeError as exc:
        # the frequency-matching translation does not exist numerically
        failing = "frequency matching: xi_init Newton iteration converges"
        write_certificate(p("certificate.txt"), {"eps": a.eps, "omega": cfg.omega_target},
                          "NOT-PROVED", failing, [str(exc)])
        print(f"verdict NOT-PROVED (failing: {failing})")
        return EXIT_NOT_PROVED
    from .normalizer import NondegeneracyError
    try:
        Hn, _, led = normalize(st, a.R_I)
    except NondegeneracyError as exc:
        failing = "nondegeneracy C^(r) != 0 in the explicit stage"
        write_certificate(p("certificate.txt"), {"eps": a.eps}, "NOT-PROVED", failing, [str(exc)])
        print(f"verdict NOT-PROVED (failing: {failing})")
        return EXIT_NOT_PROVED
    led.write(p("ledger.txt"))
    write_tfh(p("normalized.tfh"), Hn.total(), cfg.l_max, cfg.K, a.R_I)
    pp = _estimate(led, cfg.omega_target, a.R_II, pair, p("certificate.txt"),
                   {"eps": a.eps, "Psi": a.Psi, "xi_init": info["xi_init"]})
    return EXIT_OK if pp.verdict == "PROVED" else EXIT_NOT_PROVED


# --- parser --------------------------------------------------------------------------

RUN_KEYS = {"eps": "0.0005", "Psi": "0.35", "omega": None, "noble": None, "R_I": 12,
            "R_II": 600, "trunc": None, "workdir": "kamcap_run", "newton_iters": 20}


def build_parser():
    ap = argparse.ArgumentParser(prog="kamcap", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def model_args(p, defaults=True):
        d = (lambda k: RUN_KEYS[k]) if defaults else (lambda k: None)
        p.add_argument("--eps", default=d("eps"), help="perturbation amplitude (decimal)")
        p.add_argument("--Psi", default=d("Psi"), help="localization action (decimal)")
        p.add_argument("--omega", default=None, help="target frequency; default: noble of --noble")
        p.add_argument("--noble", nargs=2, metavar=("N1/D1", "N2/D2"), default=None,
                       help="Farey pair defining the noble target (default 43/74 18/31)")
        p.add_argument("--R-I", dest="R_I", type=int, default=d("R_I"))
        p.add_argument("--trunc", type=int, default=None, help="degree cut, default 2K*R_I")
        p.add_argument("--newton-iters", type=int, default=d("newton_iters"))

    p = sub.add_parser("model", help="build H^(0) and the frequency file")
    model_args(p)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("normalize", help="explicit normalization steps, writes the ledger")
    p.add_argument("--tfh", default="initial_Ham0.tfh")
    p.add_argument("--freq", default="freq_intervals")
    p.add_argument("--sample", action="store_true", help="use the bundled sample input")
    p.add_argument("--R-I", dest="R_I", type=int, default=None)
    p.add_argument("--ledger", default="ledger.txt")
    p.add_argument("--snapshot", default=None, help="write H^(R_I) as TFH")
    p.add_argument("--step-log", default=None, help="JSON lines, one per step")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("estimate", help="bound propagation and the final inequality")
    p.add_argument("--ledger", default="ledger.txt")
    p.add_argument("--freq", default="freq_intervals")
    p.add_argument("--R-II", dest="R_II", type=int, default=600)
    p.add_argument("--noble", nargs=2, metavar=("N1/D1", "N2/D2"), default=None)
    p.add_argument("--certificate", default="certificate.txt")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("fam", help="frequency-action map")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--from", dest="psi_from", type=float, required=True)
    p.add_argument("--to", dest="psi_to", type=float, required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--periods", type=int, default=32769)
    p.add_argument("--substeps", type=int, default=64)
    p.add_argument("--Psi", type=float, default=0.35)
    p.add_argument("--no-control", action="store_true")
    p.add_argument("--tol", type=float, default=1e-6, help="plateau tolerance")
    p.add_argument("--csv", default="fam.csv")
    p.add_argument("--gnuplot", default=None)
    p.set_defaults(func=cmd_fam)

    p = sub.add_parser("noble", help="noble number between two fractions")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--digits", type=int, default=6)
    p.set_defaults(func=cmd_noble)

    p = sub.add_parser("run", help="model, normalize and estimate in one go")
    p.add_argument("--config", default=None, help="key = value file; flags win")
    model_args(p, defaults=False)
    p.add_argument("--R-II", dest="R_II", type=int, default=None)
    p.add_argument("--workdir", default=None)
    p.set_defaults(func=cmd_run)
    return ap


def _merge_config(a):
    conf = read_config(a.config) if getattr(a, "config", None) else {}
    unknown = set(conf) - set(RUN_KEYS)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for k, dflt in RUN_KEYS.items():
        if getattr(a, k, None) is None:
            v = conf.get(k, dflt)
            if k in ("R_I", "R_II", "trunc", "newton_iters") and v is not None:
                v = int(v)
            if k == "noble" and isinstance(v, str):
                v = v.split()
            setattr(a, k, v)
    if a.R_II < a.R_I or a.R_I < 1:
        raise UsageError("need R_II >= R_I >= 1")


def main(argv=None):
    ap = build_parser()
    a = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .normalizer import NondegeneracyError
    from .tfseries import ResonanceError
    try:
        if a.cmd == "run":
            _merge_config(a)
        return a.func(a)
    except FileNotFoundError as exc:
        print(f"error: missing input file: {exc.filename}", file=sys.stderr)
    except ResonanceError as exc:
        print(f"error: resonance (non-resonance precondition violated): {exc}", file=sys.stderr)
    except NondegeneracyError as exc:
        print(f"error: nondegeneracy precondition violated: {exc}", file=sys.stderr)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (ValueError, IntervalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
