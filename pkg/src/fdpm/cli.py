"""
Command-line interface.

Subcommands ``sample``, ``fit``, ``density``, ``decompress`` and
``features`` wrap the library and write CSV/JSON artifacts plus a
``manifest.json`` into the output directory.

Options are resolved with flags taking precedence over a JSON ``--config``
file, which takes precedence over built-in defaults. ``--print-config``
prints the effective configuration and exits.

Exit codes: 0 success, 2 invalid flags or input, 3 resource cap, 4 fit
ambiguity or infeasible constraints, 5 continuation failure, 6 cusp solver
failure (crossing fallback written).

Heavy modules are imported lazily so ``--threads`` can set the BLAS thread
environment before numpy loads.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

__all__ = ["main", "build_parser", "MANIFEST_SCHEMA"]

MANIFEST_SCHEMA = "fdpm-manifest/1"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RESOURCE = 3
EXIT_FIT = 4
EXIT_STIFF = 5
EXIT_CUSP = 6

DEFAULTS = {
    "sample": {"model": None, "lam": 0.25, "sigma2": 1.0, "rate": None, "atoms": None,
               "weights": None, "drift": 0.0, "sigma": 0.0, "eps": None, "n": None,
               "seed": 0, "subsample": None, "subsample_seed": 1,
               "save_matrix": False, "out": "."},
    "fit": {"eigs": None, "deg_m": 2, "deg_z": 1, "moments": 0, "eta": 0.0,
            "n_samples": 256, "auto": False, "out": "."},
    "density": {"poly": None, "grid": None, "deltas": None, "q": 2, "atoms": True,
                "svg": False, "out": "."},
    "decompress": {"poly": None, "tau": None, "target_size": None, "n0": None,
                   "grid": None, "points": 1000, "deltas": None, "q": 2,
                   "ratio": 2.0 ** 0.125, "out": "."},
    "features": {"poly": None, "what": None, "tau_max": 2.0, "ratio": 2.0 ** 0.125,
                 "order": 4, "n0": None, "out": "."},
}


class UsageError(Exception):
    """Invalid combination of options (exit code 2)."""


# ==========
# Parameters
# ==========

def _floats(text):
    if text is None or isinstance(text, (list, tuple)):
        return None if text is None else [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _grid(text):
    """``lo:hi:n`` into a grid, or None."""
    import numpy
    if text is None:
        return None
    parts = str(text).split(":")
    if len(parts) != 3:
        raise UsageError("--grid expects lo:hi:n")
    lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    if not (hi > lo and n >= 2):
        raise UsageError("--grid needs hi > lo and n >= 2")
    return numpy.linspace(lo, hi, n)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdpm", description="Algebraic free decompression toolkit")
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--print-config", action="store_true",
                   help="print the effective configuration and exit")
    p.add_argument("--threads", type=int, help="BLAS/OpenMP thread count")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="sample a random matrix ensemble")
    s.add_argument("--model", choices=["mp", "cfp", "freelevy", "pb"])
    s.add_argument("--lam", type=float)
    s.add_argument("--sigma2", type=float)
    s.add_argument("--rate", type=float)
    s.add_argument("--atoms")
    s.add_argument("--weights")
    s.add_argument("--drift", type=float)
    s.add_argument("--sigma", type=float)
    s.add_argument("--eps", type=float)
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--subsample", type=int, help="also write eigenvalues of a k x k block")
    s.add_argument("--subsample-seed", type=int)
    s.add_argument("--save-matrix", action="store_true", default=None)
    s.add_argument("--out")

    f = sub.add_parser("fit", help="fit an algebraic relation to eigenvalues")
    f.add_argument("--eigs")
    f.add_argument("--deg-m", type=int)
    f.add_argument("--deg-z", type=int)
    f.add_argument("--moments", type=int)
    f.add_argument("--eta", type=float)
    f.add_argument("--n-samples", type=int)
    f.add_argument("--auto", action="store_true", default=None)
    f.add_argument("--out")

    d = sub.add_parser("density", help="density of a fitted relation")
    d.add_argument("--poly")
    d.add_argument("--grid", help="lo:hi:n (write --grid=lo:hi:n when lo is negative)")
    d.add_argument("--deltas")
    d.add_argument("--q", type=int)
    d.add_argument("--svg", action="store_true", default=None,
                   help="also write a static density.svg plot")
    d.add_argument("--out")

    c = sub.add_parser("decompress", help="free decompression of a fitted relation")
    c.add_argument("--poly")
    g = c.add_mutually_exclusive_group()
    g.add_argument("--tau", type=float)
    g.add_argument("--target-size", type=int)
    c.add_argument("--n0", type=int, help="initial size (default: from the polynomial file)")
    c.add_argument("--grid", help="lo:hi:n (write --grid=lo:hi:n when lo is negative)")
    c.add_argument("--points", type=int)
    c.add_argument("--deltas")
    c.add_argument("--q", type=int)
    c.add_argument("--ratio", type=float)
    c.add_argument("--out")

    e = sub.add_parser("features", help="edges, cusps, atoms or moments along the flow")
    e.add_argument("what", choices=["edges", "cusps", "atoms", "moments"])
    e.add_argument("--poly")
    e.add_argument("--tau-max", type=float)
    e.add_argument("--ratio", type=float)
    e.add_argument("--order", type=int)
    e.add_argument("--n0", type=int)
    e.add_argument("--out")
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the JSON file (flat or keyed by command), then flags."""
    cfg = dict(DEFAULTS[args.command])
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        data = data.get(args.command, data)
        unknown = set(data) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(data)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


# ========
# Manifest
# ========

def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out: Path, command: str, cfg: dict, inputs: list, seed, t0: float) -> None:
    from . import __version__
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "config": cfg,
        "inputs": {str(p): _digest(p) for p in inputs},
        "seed": seed,
        "version": __version__,
        "wall_time": round(time.time() - t0, 3),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")


def _outdir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(cfg, *keys):
    for k in keys:
        if cfg.get(k) is None:
            raise UsageError(f"--{k.replace('_', '-')} is required")


# ========
# Commands
# ========

def _model_from(cfg):
    from .ensembles import CFP, MP, FreeLevy, FreeLevyParams, PenningtonBahri
    name = cfg["model"]
    if name == "mp":
        return MP(cfg["lam"], cfg["sigma2"])
    if name == "pb":
        _require(cfg, "eps")
        return PenningtonBahri(cfg["lam"], cfg["eps"])
    _require(cfg, "rate", "atoms", "weights")
    params = FreeLevyParams(cfg["drift"] if name == "freelevy" else 0.0,
                            cfg["sigma"] if name == "freelevy" else 0.0,
                            cfg["rate"], tuple(_floats(cfg["atoms"])),
                            tuple(_floats(cfg["weights"])))
    return CFP(params) if name == "cfp" else FreeLevy(params)


def cmd_sample(cfg, t0) -> int:
    from .ensembles import MatrixSampleSpec, sample_matrix, subsample_principal, \
        symmetric_eigenvalues, write_matrix
    from .spectra import write_eigenvalues
    _require(cfg, "model", "n")
    out = _outdir(cfg)
    spec = MatrixSampleSpec(cfg["n"], cfg["seed"], _model_from(cfg))
    A = sample_matrix(spec)
    if cfg["save_matrix"]:
        write_matrix(out / "matrix.bin", A)
    if cfg["subsample"]:
        sub = subsample_principal(A, cfg["subsample"], cfg["subsample_seed"])
        write_eigenvalues(out / "subsample.txt", symmetric_eigenvalues(sub))
        del sub
    ev = symmetric_eigenvalues(A, overwrite=True)
    write_eigenvalues(out / "eigenvalues.txt", ev)
    print(f"wrote {len(ev)} eigenvalues to {out / 'eigenvalues.txt'}")
    _write_manifest(out, "sample", cfg, [], cfg["seed"], t0)
    return EXIT_OK


def cmd_fit(cfg, t0) -> int:
    import warnings
    from .curvefit import FitConfig, fit_sample, select_degrees, write_polynomial
    from .errors import AmbiguityWarning
    from .spectra import read_eigenvalues
    _require(cfg, "eigs")
    out = _outdir(cfg)
    sample = read_eigenvalues(cfg["eigs"])
    base = FitConfig(d_z=cfg["deg_z"], s=cfg["deg_m"], n_samples=cfg["n_samples"],
                     eta=cfg["eta"], moment_order=cfg["moments"])
    if cfg["auto"]:
        (s, d), results = select_degrees(sample, base=base)
        res = results[(s, d)]
        print(f"selected deg-m={s} deg-z={d}")
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AmbiguityWarning)
            res = fit_sample(sample, base)
    write_polynomial(out / "polynomial.json", res.poly, res.residual,
                     {"n": sample.source_size, "deg_m": res.poly.s, "deg_z": res.poly.d_z})
    print(f"residual {res.residual:.6e}")
    _write_manifest(out, "fit", cfg, [cfg["eigs"]], None, t0)
    if res.ambiguous:
        print("fit is ambiguous: the smallest singular values are not separated",
              file=sys.stderr)
        return EXIT_FIT
    return EXIT_OK


def _default_grid(P, points=1000, margin=0.1):
    import numpy
    from .decompress import support_at
    sup = support_at(P, 1.0)
    if not sup:
        raise UsageError("cannot infer the support; pass --grid")
    lo, hi = sup[0][0], sup[-1][1]
    w = hi - lo
    return numpy.linspace(lo - margin * w, hi + margin * w, points)


def cmd_density(cfg, t0) -> int:
    from .curve import density_from_curve
    from .curvefit import read_polynomial
    _require(cfg, "poly")
    out = _outdir(cfg)
    P, _ = read_polynomial(cfg["poly"])
    lam = _grid(cfg["grid"])
    if lam is None:
        lam = _default_grid(P)
    g = density_from_curve(P, lam, _floats(cfg["deltas"]), q=cfg["q"],
                           subtract_atoms=bool(cfg["atoms"]))
    g.write_csv(out / "density.csv")
    if cfg["svg"]:
        (out / "density.svg").write_text(render_svg(g.lambdas, g.rho), encoding="utf-8")
    if g.atoms:
        (out / "atoms.json").write_text(json.dumps([{"x": x, "weight": w} for x, w in g.atoms],
                                                   indent=2) + "\n", encoding="utf-8")
    _write_manifest(out, "density", cfg, [cfg["poly"]], None, t0)
    return EXIT_OK


def render_svg(x, y, width=640, height=360, pad=32) -> str:
    """Minimal static line plot of ``y`` against ``x``."""
    import numpy
    x = numpy.asarray(x, dtype=float)
    y = numpy.asarray(y, dtype=float)
    x0, x1 = float(x.min()), float(x.max())
    y1 = float(y.max()) if float(y.max()) > 0 else 1.0
    px = pad + (x - x0) / max(x1 - x0, 1e-300) * (width - 2 * pad)
    py = height - pad - y / y1 * (height - 2 * pad)
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
            f'<rect width="100%" height="100%" fill="white"/>\n'
            f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
            f'stroke="black"/>\n'
            f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{pts}"/>\n'
            f'<text x="{pad}" y="{height - 8}" font-size="12">{x0:.4g}</text>\n'
            f'<text x="{width - pad}" y="{height - 8}" font-size="12" '
            f'text-anchor="end">{x1:.4g}</text>\n</svg>\n')


def cmd_decompress(cfg, t0) -> int:
    from .curvefit import read_polynomial
    from .decompress import TauSchedule, decompress_density, write_flow
    _require(cfg, "poly")
    out = _outdir(cfg)
    P, data = read_polynomial(cfg["poly"])
    n0 = cfg["n0"] or data.get("meta", {}).get("n")
    if cfg["target_size"] is not None:
        if not n0:
            raise UsageError("--target-size needs the initial size (--n0)")
        tau = cfg["target_size"] / n0
    elif cfg["tau"] is not None:
        tau = cfg["tau"]
    else:
        raise UsageError("one of --tau or --target-size is required")
    if tau < 1:
        raise UsageError("tau must be at least 1")
    sched = TauSchedule.geometric(tau, cfg["ratio"])
    lam = _grid(cfg["grid"])
    deltas = _floats(cfg["deltas"])
    if lam is None and tau == 1.0:
        lam = _default_grid(P, cfg["points"])
    grids = decompress_density(P, lam, sched, deltas, q=cfg["q"], n_points=cfg["points"])
    write_flow(out, sched.ratios, grids, n0)
    print(f"wrote {len(grids)} frames to {out}")
    _write_manifest(out, "decompress", cfg, [cfg["poly"]], None, t0)
    return EXIT_OK


def cmd_features(cfg, t0) -> int:
    from .curve import find_atoms, moments_from_polynomial
    from .curvefit import read_polynomial
    from .decompress import TauSchedule
    from .features import evolve_atom, evolve_edges, evolve_moments, find_cusps
    _require(cfg, "poly", "what")
    out = _outdir(cfg)
    P, data = read_polynomial(cfg["poly"])
    n0 = cfg["n0"] or data.get("meta", {}).get("n")
    sched = TauSchedule.geometric(cfg["tau_max"], cfg["ratio"])
    what = cfg["what"]
    code = EXIT_OK
    if what == "edges":
        track = evolve_edges(P, sched)
        track.write_csv(out / "edges.csv", n0)
    elif what == "cusps":
        events = find_cusps(P, (1.0, sched.final))
        payload = {"cusps": [e.to_dict() for e in events]}
        if not events:
            track = evolve_edges(P, sched)
            changes = [ev for ev in track.events]
            if changes:
                payload["fallback"] = changes
                print("cusp solver found no events; reporting bulk-count changes "
                      "from crossing detection instead", file=sys.stderr)
                code = EXIT_CUSP
        (out / "cusps.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    elif what == "atoms":
        atoms = find_atoms(P)
        lines = ["tau,n_equivalent," + ",".join(f"w_{k + 1}" for k in range(len(atoms)))]
        for t in sched.ratios:
            ne = "" if not n0 else str(int(round(n0 * t)))
            lines.append(",".join([f"{t:.17g}", ne]
                                  + [f"{evolve_atom(w, t):.17g}" for _, w in atoms]))
        (out / "atoms.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        (out / "atoms.json").write_text(json.dumps([{"location": x, "weight": w}
                                                    for x, w in atoms], indent=2) + "\n",
                                        encoding="utf-8")
    else:
        order = cfg["order"]
        mu0 = moments_from_polynomial(P, order)
        lines = ["tau,n_equivalent," + ",".join(f"mu_{k}" for k in range(order + 1))]
        for t in sched.ratios:
            mu = evolve_moments(mu0, t)
            ne = "" if not n0 else str(int(round(n0 * t)))
            lines.append(",".join([f"{t:.17g}", ne] + [f"{v:.17g}" for v in mu.entries]))
        (out / "moments.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_manifest(out, f"features {what}", cfg, [cfg["poly"]], None, t0)
    return code


COMMANDS = {"sample": cmd_sample, "fit": cmd_fit, "density": cmd_density,
            "decompress": cmd_decompress, "features": cmd_features}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    t0 = time.time()
    try:
        cfg = resolve_config(args)
        if args.print_config:
            print(json.dumps(cfg, indent=2, sort_keys=True))
            return EXIT_OK
        return COMMANDS[args.command](cfg, t0)
    except UsageError as exc:
        print(f"fdpm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # mapped to the exit-code contract below
        return _exit_for(exc)


def _exit_for(exc: Exception) -> int:
    from .errors import ConfigError, ConstraintError, DomainError, ParameterError, \
        ResourceLimitError, StiffnessError, ValidationError
    if isinstance(exc, ResourceLimitError):
        code = EXIT_RESOURCE
    elif isinstance(exc, ConstraintError):
        code = EXIT_FIT
    elif isinstance(exc, StiffnessError):
        where = ", ".join(f"{k}={v}" for k, v in exc.where.items())
        print(f"fdpm: continuation failed: {exc} ({where})", file=sys.stderr)
        return EXIT_STIFF
    elif isinstance(exc, (ValidationError, ParameterError, ConfigError, DomainError,
                          OSError, ValueError)):
        code = EXIT_USAGE
    else:
        raise exc
    print(f"fdpm: error: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
