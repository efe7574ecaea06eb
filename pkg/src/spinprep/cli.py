"""Command-line interface: ``spinprep <command> ...``.

Exit codes: 0 when the requested computation reached a verdict or converged,
1 when it did not (verdict ``unresolved``, boundary not converged), 2 for
malformed input, 3 for a dimension or spin mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import (
    NotPRepresentableError,
    qubit_decompose,
    spin1_decompose,
    spin1_is_prep,
    spin1_kappa_e,
    witness_scan,
    witness_second_moment,
    witness_third_moment_spin32,
)
from .angular import angles, coherent_ket
from .bipartite import (
    DEFAULT_PRODUCT_SCHEDULE,
    bipartite_boundary_kappa,
    bipartite_decide_prep,
    partial_trace_witness,
    ppt_check,
    ppt_kappa,
    product_coherent,
    rho_from_product_mixture,
    scan2d,
    werner_state,
)
from .density import (
    ScaledFamily,
    positivity_kappa,
    psd_check,
    rho_from_mixture,
)
from .io import DimensionMismatchError, StateFile, StateFormatError, dumps_state, load_state, state_file
from .lpsolve import DEFAULT_SCHEDULE, boundary_kappa, decide_prep

log = logging.getLogger("spinprep")

EXIT_OK, EXIT_UNRESOLVED, EXIT_FORMAT, EXIT_MISMATCH = 0, 1, 2, 3

DEFAULT_TOL = {"decide": 1e-9, "boundary": 1e-4, "scan2d": 5e-3, "decompose": 1e-10}
DEFAULT_SCAN_SCHEDULE = ((40, 48), (80, 96), (160, 192))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        # JSON has no inf/nan literals
        return x if math.isfinite(x) else str(x)
    return x


def _emit(payload: dict, out):
    text = json.dumps(_jsonable(payload), indent=2) + "\n"
    _write(text, out)


def _write(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _header(args, **tolerances) -> dict:
    return {
        "tool": "spinprep",
        "version": __version__,
        "command": args.command,
        "norm": getattr(args, "norm", "trace"),
        "tolerances": tolerances,
    }


def _tol(args) -> float:
    return DEFAULT_TOL[args.command] if args.tol is None else args.tol


def _parse_schedule(text, bipartite: bool):
    """``"a,b,c"`` for one spin; ``"axb,..."`` (or plain ``n`` for both) for two."""
    if text is None:
        return DEFAULT_PRODUCT_SCHEDULE if bipartite else DEFAULT_SCHEDULE
    try:
        items = [s.strip() for s in text.split(",") if s.strip()]
        if bipartite:
            out = []
            for s in items:
                a, _, b = s.partition("x")
                out.append((int(a), int(b or a)))
            sched = tuple(out)
        else:
            sched = tuple(int(s) for s in items)
    except ValueError:
        raise StateFormatError(f"cannot parse schedule {text!r}") from None
    flat = np.ravel(sched)
    if not len(sched) or np.any(flat < 1) or np.any(np.diff(np.reshape(flat, (len(sched), -1)), axis=0) < 0):
        raise StateFormatError(f"schedule {text!r} must be non-empty, positive and non-decreasing")
    return sched


def _parse_vector(text) -> np.ndarray:
    try:
        v = np.array([float(s) for s in text.split(",")])
    except ValueError:
        raise StateFormatError(f"cannot parse vector {text!r}") from None
    if v.shape != (3,) or not np.linalg.norm(v) > 0:
        raise StateFormatError(f"direction must be a non-zero x,y,z triple, got {text!r}")
    return v


def _mixture_error(sf: StateFile, mixture) -> float:
    j = sf.spins[0]
    return float(np.abs(rho_from_mixture(mixture, j) - sf.matrix).max())


# --- decide -------------------------------------------------------------------

def _decide_single(sf: StateFile, args, tol) -> dict:
    rho, j = sf.matrix, sf.spins[0]
    lam, psd = psd_check(rho)
    if not psd:
        return {"prep": False, "reason": "not positive semidefinite",
                "witness": {"kind": "positivity", "value": lam}}
    if sf.twice_j[0] == 1:
        mix = qubit_decompose(rho)
        return {"prep": True, "reason": "every spin-1/2 state is classical",
                "certificate": mix.to_dict(), "reconstruction_error": _mixture_error(sf, mix)}
    if sf.twice_j[0] == 2:
        ok, lam_z = spin1_is_prep(rho)
        if not ok:
            return {"prep": False, "reason": "spin-1 Z matrix not positive semidefinite",
                    "witness": {"kind": "second-moment", "value": lam_z}}
        mix = spin1_decompose(rho)
        return {"prep": True, "reason": "spin-1 Z criterion", "witness": {"kind": "second-moment",
                "value": lam_z}, "certificate": mix.to_dict(),
                "reconstruction_error": _mixture_error(sf, mix)}
    reports = [witness_scan(rho, j, "second-moment")]
    if sf.twice_j[0] == 3:
        reports.append(witness_scan(rho, j, "third-moment"))
    for rep in reports:
        if rep.violated:
            return {"prep": False, "reason": f"{rep.kind} witness violated", "witness": rep.to_dict()}
    dec = decide_prep(rho, grid=args.n, refine=args.refine, tol=tol)
    out = {"prep": True if dec.prep else "unresolved",
           "witnesses": [r.to_dict() for r in reports], "lp": dec.to_dict()}
    if dec.prep:
        out["certificate"] = dec.mixture.to_dict()
        out["reconstruction_error"] = dec.reconstruction_error
    else:
        out["reason"] = "no certificate found on the grid and no witness violated"
    return out


def _decide_bipartite(sf: StateFile, args, tol) -> dict:
    rho, dims = sf.matrix, sf.dims
    lam, psd = psd_check(rho)
    if not psd:
        return {"prep": False, "reason": "not positive semidefinite",
                "witness": {"kind": "positivity", "value": lam}}
    lam_pt, ppt = ppt_check(rho, dims)
    if not ppt:
        return {"prep": False, "reason": "partial transpose not positive (entangled)",
                "witness": {"kind": "ppt", "value": lam_pt}}
    if dims[1] == 3:
        # conditional states of a classical state are classical
        for v in [np.eye(dims[0])] + [np.diag(np.eye(dims[0])[i]) for i in range(dims[0])]:
            try:
                w = partial_trace_witness(rho, dims, v)
            except ValueError:
                continue
            if w.rejects:
                return {"prep": False, "reason": "conditional spin-1 state fails the Z criterion",
                        "witness": {"kind": "partial-trace", "value": w.lambda_min_z,
                                    "v_a": v}}
    sched = _parse_schedule(args.schedule, True)[:1] if args.schedule else ((60, 72),)
    dec = bipartite_decide_prep(rho, dims, schedule=sched, refine=args.refine, tol=tol)
    out = {"ppt_lambda_min": lam_pt, "lp": dec.to_dict()}
    if dec.prep:
        out.update(prep=True, certificate=dec.mixture.to_dict(),
                   reconstruction_error=dec.reconstruction_error)
    elif dims == (2, 2):
        out.update(prep=True, certificate=None,
                   reason="two qubits: positive partial transpose implies separable, hence classical")
    else:
        out.update(prep="unresolved", reason="no product certificate found and no witness violated")
    return out


def cmd_decide(args) -> int:
    sf = load_state(args.state, raw=args.raw)
    tol = _tol(args)
    body = _decide_bipartite(sf, args, tol) if sf.bipartite else _decide_single(sf, args, tol)
    _emit({**_header(args, decide=tol, state=1e-8), "dims": sf.dims, **body}, args.out)
    return EXIT_UNRESOLVED if body["prep"] == "unresolved" else EXIT_OK


# --- boundary -----------------------------------------------------------------

def cmd_boundary(args) -> int:
    sf = load_state(args.state, raw=args.raw)
    tol = _tol(args)
    fam = ScaledFamily.from_direction(sf.matrix, sf.dims, args.norm)
    sched = _parse_schedule(args.schedule, sf.bipartite)
    if sf.bipartite:
        res = bipartite_boundary_kappa(fam, schedule=sched, tol=tol, polish=args.polish)
    else:
        res = boundary_kappa(fam, schedule=sched, tol=tol, polish=args.polish)
    body = {"dims": sf.dims, "direction_norm": fam.scale, "schedule": sched,
            **res.to_dict(), "kappa_positivity": positivity_kappa(fam)}
    if sf.bipartite:
        body["kappa_ppt"] = ppt_kappa(fam)
    elif sf.twice_j[0] == 2:
        body["kappa_analytic"] = spin1_kappa_e(fam)
    _emit({**_header(args, boundary=tol), **body}, args.out)
    return EXIT_OK if res.converged else EXIT_UNRESOLVED


# --- scan2d -------------------------------------------------------------------

def cmd_scan2d(args) -> int:
    a = load_state(args.direction1, raw=args.raw)
    b = load_state(args.direction2, raw=args.raw)
    if a.twice_j != b.twice_j or a.kind != b.kind:
        raise DimensionMismatchError(f"directions differ in spins: {a.twice_j} vs {b.twice_j}")
    if not a.bipartite:
        raise DimensionMismatchError("scan2d needs two-spin (bipartite) directions")
    tol = _tol(args)
    sched = _parse_schedule(args.schedule, True) if args.schedule else DEFAULT_SCAN_SCHEDULE
    res = scan2d(a.matrix, b.matrix, a.dims, rays=args.rays, schedule=sched,
                 polish=args.polish, workers=args.workers, tol=tol, norm=args.norm)
    _write(res.to_csv(), args.out)
    bad = int(np.sum(~res.converged))
    log.info("scan2d: %d rays, %d not converged", args.rays, bad)
    return EXIT_OK if bad == 0 else EXIT_UNRESOLVED


# --- witness ------------------------------------------------------------------

def cmd_witness(args) -> int:
    sf = load_state(args.state, raw=args.raw)
    reports = []
    if sf.bipartite:
        lam_pt, _ = ppt_check(sf.matrix, sf.dims)
        body = {"ppt_lambda_min": lam_pt}
        if sf.dims[1] == 3:
            w = partial_trace_witness(sf.matrix, sf.dims)
            body["partial_trace"] = {"lambda_min_z": w.lambda_min_z, "rejects": w.rejects}
        _emit({**_header(args), "dims": sf.dims, **body}, args.out)
        return EXIT_OK
    j = sf.spins[0]
    kinds = ["second-moment"] + (["third-moment"] if sf.twice_j[0] == 3 else [])
    if args.kind != "all":
        if args.kind == "third-moment" and sf.twice_j[0] != 3:
            raise DimensionMismatchError("the third-moment witness is defined for spin 3/2 only")
        kinds = [args.kind]
    for kind in kinds:
        if args.scan:
            reports.append(witness_scan(sf.matrix, j, kind))
        else:
            t = _parse_vector(args.t)
            fn = witness_second_moment if kind == "second-moment" else None
            reports.append(fn(sf.matrix, t, j) if fn else witness_third_moment_spin32(sf.matrix, t))
    body = {"dims": sf.dims, "scan": args.scan, "witnesses": [r.to_dict() for r in reports],
            "violated": any(r.violated for r in reports)}
    _emit({**_header(args, witness=reports[0].tol), **body}, args.out)
    return EXIT_OK


# --- decompose ----------------------------------------------------------------

def cmd_decompose(args) -> int:
    sf = load_state(args.state, raw=args.raw)
    tol = _tol(args)
    body: dict = {"dims": sf.dims}
    mixture, err = None, float("nan")
    if sf.bipartite:
        dec = bipartite_decide_prep(sf.matrix, sf.dims, tol=tol)
        body["method"] = "product-grid LP"
        if dec.prep:
            mixture = dec.mixture
            err = float(np.abs(rho_from_product_mixture(mixture, *sf.spins) - sf.matrix).max())
    elif sf.twice_j[0] == 1:
        body["method"] = "antipodal pair"
        mixture = qubit_decompose(sf.matrix)
    elif sf.twice_j[0] == 2:
        body["method"] = "eight-point spin-1 construction"
        try:
            mixture = spin1_decompose(sf.matrix)
        except NotPRepresentableError as exc:
            body["reason"] = str(exc)
    else:
        body["method"] = "grid LP with polish"
        dec = decide_prep(sf.matrix, grid=args.n, tol=tol)
        mixture = dec.mixture
    if mixture is not None and not sf.bipartite:
        err = _mixture_error(sf, mixture)
        body["vectors"] = mixture.vectors
    ok = mixture is not None and err <= tol
    body.update(prep=ok, n_points=0 if mixture is None else len(mixture),
                reconstruction_error=err,
                mixture=None if mixture is None else mixture.to_dict())
    _emit({**_header(args, reconstruction=tol), **body}, args.out)
    return EXIT_OK if ok else EXIT_UNRESOLVED


# --- gen ----------------------------------------------------------------------

def _random_direction(rng) -> tuple[float, float]:
    v = rng.normal(size=3)
    th, ph = angles(v / np.linalg.norm(v))
    return float(th[0]), float(ph[0])


def cmd_gen(args) -> int:
    rng = np.random.default_rng(args.seed)
    try:
        tj = tuple(int(s) for s in args.twice_j.split(","))
    except ValueError:
        raise StateFormatError(f"cannot parse --twice-j {args.twice_j!r}") from None
    if len(tj) not in (1, 2) or min(tj) < 1:
        raise StateFormatError("--twice-j takes one or two positive integers")
    dims = [t + 1 for t in tj]
    d = int(np.prod(dims))
    if args.kind == "random":
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        rho = g @ g.conj().T
        rho /= np.trace(rho).real
    elif args.kind == "coherent":
        if len(tj) == 1:
            ket = coherent_ket(tj[0] / 2, _random_direction(rng))
        else:
            ket = product_coherent(tj[0] / 2, _random_direction(rng), tj[1] / 2,
                                   _random_direction(rng))
        rho = np.outer(ket, ket.conj())
    elif args.kind == "werner":
        if tj != (1, 1):
            raise DimensionMismatchError("werner states are two-qubit states (--twice-j 1,1)")
        rho = werner_state(args.p)
    else:  # pragma: no cover - argparse restricts choices
        raise StateFormatError(f"unknown kind {args.kind!r}")
    if args.direction:
        rho = rho - np.eye(d) / d
    _write(dumps_state(state_file(rho, tj if len(tj) == 2 else tj[0])), args.out)
    return EXIT_OK


# --- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinprep", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"spinprep {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, state=True):
        if state:
            sp.add_argument("state", help="JSON state file")
        sp.add_argument("--raw", action="store_true",
                        help="accept matrices without unit trace (direction files)")
        sp.add_argument("--out", help="write output here instead of stdout")

    sp = sub.add_parser("decide", help="decide P-representability (true/false/unresolved)")
    common(sp)
    sp.add_argument("--n", type=int, default=500, help="Fibonacci grid size (default 500)")
    sp.add_argument("--refine", type=int, default=5, help="column-generation rounds (default 5)")
    sp.add_argument("--schedule", help="bipartite grid as nAxnB (default 60x72)")
    sp.add_argument("--tol", type=float, help="reconstruction tolerance (default 1e-9)")
    sp.set_defaults(func=cmd_decide)

    sp = sub.add_parser("boundary", help="kappa_e along the ray from the maximally mixed state")
    common(sp)
    sp.add_argument("--schedule", help="nested grid sizes a,b,c (two spins: axb,...)")
    sp.add_argument("--tol", type=float, help="relative convergence tolerance (default 1e-4)")
    sp.add_argument("--norm", choices=("trace", "hs"), default="trace")
    sp.add_argument("--polish", type=int, default=10,
                    help="max column-generation rounds after the last grid (default 10)")
    sp.set_defaults(func=cmd_boundary)

    sp = sub.add_parser("scan2d", help="boundary radii over a plane of two-spin directions (CSV)")
    sp.add_argument("direction1")
    sp.add_argument("direction2")
    common(sp, state=False)
    sp.add_argument("--rays", type=int, default=64)
    sp.add_argument("--schedule", help="nested product grids axb,... (default 40x48,80x96,160x192)")
    sp.add_argument("--tol", type=float, help="per-ray convergence tolerance (default 5e-3)")
    sp.add_argument("--norm", choices=("trace", "hs"), default="trace")
    sp.add_argument("--polish", type=int, default=10, help="max column-generation rounds per ray")
    sp.add_argument("--workers", type=int, default=1, help="parallel processes for the rays")
    sp.set_defaults(func=cmd_scan2d)

    sp = sub.add_parser("witness", help="moment witnesses (second moment; third moment for j=3/2)")
    common(sp)
    sp.add_argument("--scan", action="store_true", help="minimize over all directions t")
    sp.add_argument("--t", default="0,0,1", help="direction x,y,z when not scanning")
    sp.add_argument("--kind", choices=("all", "second-moment", "third-moment"), default="all")
    sp.set_defaults(func=cmd_witness)

    sp = sub.add_parser("decompose", help="explicit coherent-state decomposition")
    common(sp)
    sp.add_argument("--n", type=int, default=500, help="grid size for j > 1")
    sp.add_argument("--tol", type=float, help="reconstruction tolerance (default 1e-10)")
    sp.set_defaults(func=cmd_decompose)

    sp = sub.add_parser("gen", help="write a test state file")
    sp.add_argument("--kind", choices=("random", "coherent", "werner"), default="random")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--twice-j", default="2", help="2j, or 2jA,2jB for two spins (default 2)")
    sp.add_argument("--p", type=float, default=0.5, help="Werner singlet weight")
    sp.add_argument("--direction", action="store_true",
                    help="emit the traceless part (load later with --raw)")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except DimensionMismatchError as exc:
        print(f"spinprep: dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except StateFormatError as exc:
        print(f"spinprep: bad input: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
