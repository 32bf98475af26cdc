"""Command-line front end: ``ellipcert {solve,certify,plot-data,constants}``.

Exit codes: 0 success (for ``certify``: verdict nonnegative or positive),
1 solver divergence or I/O trouble, 2 unreadable input, 3 verdict failed or
existence-only, 4 no positivity criterion applies.
"""

from __future__ import annotations

import argparse
import configparser
import contextlib
import csv
import io
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .certify import (ConstantsRegistry, Frame, PipelineConfig, run_pipeline)
from .errors import CertError, NewtonDiverged
from .galerkin import ProblemSpec, solve
from .interval import Interval, from_decimal, from_json, to_decimal_lower, to_decimal_upper
from .legendre_basis import LegendreFunction, Rectangle
from .rigor_norms import MAX_DEPTH, build_flag_grid

log = logging.getLogger(__name__)

EXIT_OK, EXIT_RUNTIME, EXIT_PARSE, EXIT_VERDICT, EXIT_INAPPLICABLE = 0, 1, 2, 3, 4
STRATEGIES = ("theorem1", "theorem2", "corollaryA1")
APPROX_MAGIC = "ellipcert-approx 1"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Everything one invocation needs.  Decimal fields stay as text so that
    rigorous consumers can read them outward and serialization is exact."""

    lam: str = "0"
    terms: tuple[tuple[str, int], ...] = (("1", 3),)
    epsilon: str | None = None
    domain: tuple[str, str, str, str] = ("0", "1", "0", "1")
    N: int = 40
    tol: float = 1e-12
    max_iter: int = 50
    amplitude: float | None = None
    depth: int = 7
    order_margin: int = 0
    strategy: str | None = None
    r_inf: str | None = None
    frame_width: str | None = None
    superset: tuple[tuple[str, str, str, str], ...] = ()
    constants: tuple[tuple[int, str], ...] = ()
    approx: str | None = None
    certificate: str | None = None
    plot: str | None = None
    flags: str | None = None

    def __post_init__(self):
        if self.N < 2:
            raise ConfigError(f"N must be at least 2, got {self.N}")
        if not 1 <= self.depth <= MAX_DEPTH:
            raise ConfigError(f"depth must lie in [1, {MAX_DEPTH}], got {self.depth}")
        if self.order_margin < 0:
            raise ConfigError("order_margin must be nonnegative")
        if not self.tol > 0 or self.max_iter < 1:
            raise ConfigError("tol must be positive and max_iter at least 1")
        if self.strategy is not None and self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {', '.join(STRATEGIES)}")
        if self.frame_width is not None and self.superset:
            raise ConfigError("give either frame_width or superset, not both")
        for q, _ in self.constants:
            if q < 2:
                raise ConfigError(f"embedding constant index must be >= 2, got C{q}")
        try:
            self.problem()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def rectangle(self) -> Rectangle:
        return Rectangle(*(float(v) for v in self.domain))

    def problem(self) -> ProblemSpec:
        dom = self.rectangle()
        if self.epsilon is not None:
            return ProblemSpec.allen_cahn(self.epsilon, dom)
        return ProblemSpec.make(self.lam, self.terms, dom)

    def registry(self) -> ConstantsRegistry:
        reg = ConstantsRegistry(self.rectangle())
        for q, v in self.constants:
            reg.supply(q, v)
        return reg

    def pipeline(self, approx: LegendreFunction | None = None) -> PipelineConfig:
        sup = None
        if self.frame_width is not None:
            sup = Frame(float(self.frame_width))
        elif self.superset:
            sup = [Rectangle(*(float(v) for v in r)) for r in self.superset]
        return PipelineConfig(N=approx.N if approx is not None else self.N, tol=self.tol,
                              max_iter=self.max_iter, amplitude=self.amplitude, depth=self.depth,
                              order_margin=self.order_margin, strategy=self.strategy, approx=approx,
                              r_inf=None if self.r_inf is None else from_decimal(self.r_inf), superset=sup)


def _decimal(text: str, key: str) -> str:
    text = text.strip()
    try:
        from_decimal(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc
    return text


def _int(sec, key, default):
    try:
        return sec.getint(key, fallback=default)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer") from exc


def _float(sec, key, default):
    raw = sec.get(key, fallback=None)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number") from exc


def _opt(sec, key):
    raw = sec.get(key, fallback=None)
    return raw.strip() or None if raw is not None else None


def _rect(text: str, key: str) -> tuple[str, str, str, str]:
    parts = text.split()
    if len(parts) != 4:
        raise ConfigError(f"{key}: expected four numbers x0 x1 y0 y1")
    return tuple(_decimal(v, key) for v in parts)


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    known = {"problem", "solver", "rigor", "output"}
    extra = set(cp.sections()) - known
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")
    pr, so, ri, ou = (cp[s] if cp.has_section(s) else cp[cp.default_section] for s in
                      ("problem", "solver", "rigor", "output"))

    kw: dict = {}
    eps = _opt(pr, "epsilon")
    if eps is not None:
        if "terms" in pr or "lambda" in pr:
            raise ConfigError("epsilon is a shortcut; do not combine it with lambda or terms")
        kw["epsilon"] = _decimal(eps, "epsilon")
    else:
        kw["lam"] = _decimal(pr.get("lambda", "0"), "lambda")
        raw = pr.get("terms", "1:3")
        terms = []
        for item in raw.split(","):
            try:
                a, i = item.split(":")
                terms.append((_decimal(a, "terms"), int(i)))
            except ValueError as exc:
                raise ConfigError(f"terms: cannot read {item.strip()!r}, expected coefficient:exponent") from exc
        kw["terms"] = tuple(sorted(terms, key=lambda t: t[1]))
    if "domain" in pr:
        kw["domain"] = _rect(pr["domain"], "domain")

    kw["N"] = _int(so, "N", RunConfig.N)
    kw["tol"] = _float(so, "tol", RunConfig.tol)
    kw["max_iter"] = _int(so, "max_iter", RunConfig.max_iter)
    kw["amplitude"] = _float(so, "amplitude", None)

    kw["depth"] = _int(ri, "depth", RunConfig.depth)
    kw["order_margin"] = _int(ri, "order_margin", 0)
    kw["strategy"] = _opt(ri, "strategy")
    r_inf = _opt(ri, "r_inf")
    kw["r_inf"] = None if r_inf is None else _decimal(r_inf, "r_inf")
    fw = _opt(ri, "frame_width")
    kw["frame_width"] = None if fw is None else _decimal(fw, "frame_width")
    sup = _opt(ri, "superset")
    if sup:
        kw["superset"] = tuple(_rect(r, "superset") for r in sup.split(";") if r.strip())
    consts = _opt(ri, "constants")
    if consts:
        pairs = []
        for item in consts.split(","):
            name, _, val = item.partition(":")
            name = name.strip()
            if not (name.startswith("C") and name[1:].isdigit()) or not val:
                raise ConfigError(f"constants: cannot read {item.strip()!r}, expected Cq:value")
            pairs.append((int(name[1:]), _decimal(val, name)))
        kw["constants"] = tuple(sorted(pairs))

    for key in ("approx", "certificate", "plot", "flags"):
        kw[key] = _opt(ou, key)
    return RunConfig(**kw)


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form; parse_config inverts it exactly."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    pr = {}
    if cfg.epsilon is not None:
        pr["epsilon"] = cfg.epsilon
    else:
        pr["lambda"] = cfg.lam
        pr["terms"] = ", ".join(f"{a}:{i}" for a, i in cfg.terms)
    pr["domain"] = " ".join(cfg.domain)
    cp["problem"] = pr
    so = {"N": str(cfg.N), "tol": repr(cfg.tol), "max_iter": str(cfg.max_iter)}
    if cfg.amplitude is not None:
        so["amplitude"] = repr(cfg.amplitude)
    cp["solver"] = so
    ri = {"depth": str(cfg.depth), "order_margin": str(cfg.order_margin)}
    for key in ("strategy", "r_inf", "frame_width"):
        if getattr(cfg, key) is not None:
            ri[key] = getattr(cfg, key)
    if cfg.superset:
        ri["superset"] = "; ".join(" ".join(r) for r in cfg.superset)
    if cfg.constants:
        ri["constants"] = ", ".join(f"C{q}:{v}" for q, v in cfg.constants)
    cp["rigor"] = ri
    cp["output"] = {k: getattr(cfg, k) for k in ("approx", "certificate", "plot", "flags")
                    if getattr(cfg, k) is not None}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_config(path: str | os.PathLike) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text)


# ---------------------------------------------------------------------------
# Approximation files
# ---------------------------------------------------------------------------


def write_approx(path: str | os.PathLike, u: LegendreFunction, digest: str) -> None:
    """Text header, a blank line, then N*N little-endian binary64 values in row-major order."""
    dom = " ".join(float.hex(float(v)) for v in u.domain.as_tuple())
    header = f"{APPROX_MAGIC}\nN {u.N}\ndomain {dom}\nproblem {digest}\n\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(u.coeffs, dtype="<f8").tobytes())


def read_approx(path: str | os.PathLike) -> tuple[LegendreFunction, dict]:
    try:
        with open(path, "rb") as fh:
            if fh.readline().decode("ascii", "replace").strip() != APPROX_MAGIC:
                raise ConfigError(f"{path}: not an approximation file")
            meta = {}
            while (line := fh.readline().decode("ascii", "replace").strip()):
                key, _, val = line.partition(" ")
                meta[key] = val
            blob = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read approximation: {exc}") from exc
    try:
        N = int(meta["N"])
        dom = Rectangle(*(float.fromhex(v) for v in meta["domain"].split()))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed header") from exc
    if len(blob) != 8 * N * N:
        raise ConfigError(f"{path}: expected {N * N} coefficients, found {len(blob) / 8:g}")
    c = np.frombuffer(blob, dtype="<f8").reshape(N, N).astype(np.float64)
    return LegendreFunction(c, dom), meta


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def surface_csv(u: LegendreFunction, n: int) -> str:
    xs, ys, U = u.sample(n)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "u"])
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(U[i, j]))])
    return buf.getvalue()


def _up(v, digits=9):
    return "-" if v is None else to_decimal_upper(v, digits)


def certificate_table(cert) -> str:
    res = cert.residual or {}
    rows = [("verdict", cert.verdict), ("strategy", cert.strategy or "-"), ("N", cert.N)]
    rows += [("inverse norm <=", _up(cert.inverse_norm)),
             ("|F(u)|_V* <=", _up(from_json(res["dual"])) if "dual" in res else "-"),
             ("L <=", _up(cert.L)), ("alpha <=", _up(cert.alpha)),
             ("beta <=", _up(cert.beta)), ("rho <=", _up(cert.rho))]
    for name, c in cert.constants.items():
        rows.append((f"{name} <=", _up(from_json(c["value"]))))
    if "condition_value" in cert.margins:
        rows.append(("condition value <=", _up(cert.margins["condition_value"])))
    if "condition_bound" in cert.margins:
        rows.append(("condition bound >=", to_decimal_lower(cert.margins["condition_bound"], 9)))
    if cert.mu1_lower is not None:
        rows.append(("mu1 >=", to_decimal_lower(cert.mu1_lower, 9)))
    if cert.error:
        rows.append(("failed stage", f"{cert.stage}: {cert.error}"))
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def resolve_jobs(jobs: int | None) -> int | None:
    if jobs is not None:
        return jobs
    env = os.environ.get("ELLIPCERT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring ELLIPCERT_THREADS=%r", env)
    return None


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "depth", None) is not None:
        cfg = replace(cfg, depth=args.depth)
    return cfg


def cmd_solve(args) -> int:
    cfg = _config(args)
    p = cfg.problem()
    try:
        u, rep = solve(p, cfg.N, cfg.tol, cfg.max_iter, cfg.amplitude)
    except NewtonDiverged as exc:
        print(f"error: solve: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out = args.out or cfg.approx or "approx.bin"
    write_approx(out, u, p.digest())
    print(f"converged N={u.N} iterations={rep.iterations} residual={rep.residual:.3e} "
          f"max u ~ {u.max_on_grid():.4f} -> {out}")
    return EXIT_OK


def cmd_certify(args) -> int:
    cfg = _config(args)
    p = cfg.problem()
    approx = None
    path = args.approx or cfg.approx
    if path:
        approx, meta = read_approx(path)
        if meta.get("problem") != p.digest():
            raise ConfigError(f"{path} was computed for a different problem")
    cert = run_pipeline(p, cfg.pipeline(approx), cfg.registry())
    out = args.out or cfg.certificate
    if out:
        Path(out).write_text(cert.to_json() + "\n")
    print(certificate_table(cert))
    if cert.succeeded:
        return EXIT_OK
    if cert.verdict == "no-positive-solution":
        print(f"error: strategy: no positive solution ({cert.notes[0]})", file=sys.stderr)
        return EXIT_INAPPLICABLE
    if cert.error == "StrategyInapplicable":
        print("error: positivity: no positivity criterion applies", file=sys.stderr)
        return EXIT_INAPPLICABLE
    print(f"error: {cert.stage}: verdict {cert.verdict} ({cert.error or 'no error recorded'})",
          file=sys.stderr)
    return EXIT_VERDICT


def cmd_plot_data(args) -> int:
    if not args.approx:
        raise ConfigError("plot-data needs --approx")
    u, _ = read_approx(args.approx)
    if args.grid < 2:
        raise ConfigError("--grid must be at least 2")
    _write(args.out, surface_csv(u, args.grid))
    if args.flags:
        grid = build_flag_grid(u, Interval(0.0), args.depth or 7)
        Path(args.flags).write_text(grid.to_csv())
    return EXIT_OK


def cmd_constants(args) -> int:
    cfg = _config(args)
    reg = cfg.registry()
    rows = [(name, f"[{to_decimal_lower(v, 10)}, {to_decimal_upper(v, 10)}]", prov)
            for name, v, prov in reg.report()]
    cn = reg.CN(cfg.N)
    rows.append((f"C_N (N={cfg.N})", f"[{to_decimal_lower(cn.value, 10)}, {to_decimal_upper(cn.value, 10)}]",
                 cn.provenance))
    w0 = max(len(r[0]) for r in rows)
    w1 = max(len(r[1]) for r in rows)
    _write(args.out, "".join(f"{a:<{w0}}  {b:<{w1}}  {c}\n" for a, b, c in rows))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "certify": cmd_certify, "plot-data": cmd_plot_data,
            "constants": cmd_constants}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ellipcert", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config")
        sp.add_argument("--out")
        sp.add_argument("--jobs", type=int)
        sp.add_argument("--depth", type=int)
        if name in ("certify", "plot-data"):
            sp.add_argument("--approx")
        if name == "plot-data":
            sp.add_argument("--grid", type=int, default=101)
            sp.add_argument("--flags", help="also write the cell flag grid CSV here")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    if args.depth is not None and not 1 <= args.depth <= MAX_DEPTH:
        print(f"error: --depth must lie in [1, {MAX_DEPTH}]", file=sys.stderr)
        return EXIT_PARSE
    jobs = resolve_jobs(args.jobs)
    limit = threadpool_limits(limits=jobs) if jobs else contextlib.nullcontext()
    try:
        with limit:
            return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: parse: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except CertError as exc:
        print(f"error: {args.command}: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
