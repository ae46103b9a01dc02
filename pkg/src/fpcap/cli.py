"""Command line front end.

``fpcap check|analyze|pde|mc|compare --config CFG --out DIR``

Exit codes: 0 success, 1 model check failed, 2 configuration error,
3 critical-point search failed, 4 PDE stage failed, 5 pipeline error
(missing inputs, Monte Carlo failure).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import tempfile
from pathlib import Path

import numpy as np
import scipy

from . import __version__, _backend, approx, fd, fieldio, mc, pipeline
from .config import ConfigError, build_model, config_hash, load
from .landscape import DegenerateCriticalPointError, UnreachableTargetError, two_well
from .model import ModelError, check_model, default_probes
from .saddle import StructureError

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_LANDSCAPE, EXIT_PDE, EXIT_PIPELINE = 0, 1, 2, 3, 4, 5

COLUMNS = {
    "check": ["epsilon", "divergence_residual", "ellipticity_margin", "confining_margin",
              "hessian_asymmetry", "elliptic_structure", "passed"],
    "analyze": ["epsilon", "mu", "beta", "omega0", "Z", "laplace_Z", "A_eps", "capacity", "mean_time"],
    "pde": ["epsilon", "h", "cap_dirichlet", "cap_flux", "cap_adjoint", "J_triv_upper", "J_poisson_upper",
            "J_minimizer", "sharp_formula", "cap_dirichlet_fine", "cap_extrapolated", "richardson_err",
            "ratio_to_sharp", "K", "eta", "peclet_max", "poisson_energy_ratio"],
    "landscape": ["epsilon", "h", "w_m1", "w_m1_fine", "w_m1_extrapolated", "richardson_err", "EK_time",
                  "ratio_w_ek"],
    "mc": ["epsilon", "dt", "EK_time", "n_paths", "n_hit", "n_censored", "n_diverged", "mean", "stderr",
           "ci_lo", "ci_hi", "censored_fraction", "biased_low"],
    "compare": ["epsilon", "EK_time", "w_m1_pde", "MC_mean", "MC_ci_lo", "MC_ci_hi", "ratio_mc_ek",
                "ratio_w_ek", "pass_mc_ek", "pass_w_ek", "pass_ci_covers_w"],
}

# acceptance bands used by the compare report
MC_EK_BAND = (0.7, 1.3)
W_EK_BAND = (0.85, 1.15)


class PipelineError(RuntimeError):
    """A stage cannot run (missing or empty inputs)."""


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items() if not k.startswith("_")}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        v = float(v)
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def atomic_write(path: Path, data: bytes | str) -> None:
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd_, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd_, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Writer:
    """Collects written files for the manifest."""

    def __init__(self, out: Path, formats):
        self.out = Path(out)
        self.formats = list(formats)
        self.files: dict[str, str] = {}

    def put(self, name: str, data: bytes | str) -> None:
        atomic_write(self.out / name, data)
        raw = data.encode("utf-8") if isinstance(data, str) else data
        self.files[name] = hashlib.sha256(raw).hexdigest()

    def table(self, name: str, rows: list[dict]) -> None:
        cols = COLUMNS[name]
        if "csv" in self.formats:
            self.put(f"{name}.csv", rows_to_csv(rows, cols))
        if "json" in self.formats:
            payload = [{c: _jsonable(r.get(c)) for c in cols} for r in rows]
            self.put(f"{name}.json", json.dumps(payload, indent=2, sort_keys=False) + "\n")

    def manifest(self, command: str, cfg: dict) -> None:
        doc = {
            "command": command,
            "config_sha256": config_hash(cfg),
            "config": cfg,
            "seed": cfg["mc"].get("seed"),
            "versions": {
                "fpcap": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
            "kernel_backend": _backend.name,
            "outputs": dict(sorted(self.files.items())),
        }
        atomic_write(self.out / f"manifest_{command}.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _eps_tag(eps: float) -> str:
    return repr(float(eps)).replace(".", "p")


def _read_table(out: Path, name: str) -> list[dict]:
    pj, pc = out / f"{name}.json", out / f"{name}.csv"
    if pj.exists():
        return json.loads(pj.read_text())
    if pc.exists():
        with open(pc, newline="") as fh:
            return [{k: _parse(v) for k, v in r.items()} for r in csv.DictReader(fh)]
    raise PipelineError(f"missing input {name}.json/{name}.csv in {out}")


def _parse(v: str):
    if v in ("true", "false"):
        return v == "true"
    try:
        return float(v)
    except ValueError:
        return v


# ---------------------------------------------------------------------------
# commands


def cmd_check(cfg: dict, w: Writer, log) -> int:
    model = build_model(cfg["model"])
    p = cfg["probes"]
    probes = default_probes(model.dim, p["lo"], p["hi"], p["n"])
    rows = []
    for eps in cfg["epsilons"]:
        rep = check_model(model, eps, probes, tol=p["tol"])
        row = {"epsilon": eps}
        row.update(rep.as_dict())
        rows.append(row)
        log(f"check eps={eps:g}: divergence residual {rep.divergence_residual:.3e} "
            f"(worst {rep.divergence_worst_probe}), ellipticity {rep.ellipticity_margin:.3g}, "
            f"confining margin {rep.confining_margin:.3g} -> {'pass' if rep.passed else 'FAIL'}")
    w.table("check", rows)
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_CHECK


def _setup(cfg: dict) -> pipeline.Setup:
    model = build_model(cfg["model"])
    return pipeline.prepare(model, cfg["model"].get("box"), cfg["model"].get("start_well", "right"))


def cmd_analyze(cfg: dict, w: Writer, log) -> int:
    setup = _setup(cfg)
    rows = [pipeline.analyze_row(setup, eps) for eps in cfg["epsilons"]]
    for r in rows:
        log(f"analyze eps={r['epsilon']:g}: mu={r['mu']:.6g} capacity={r['capacity']:.6g} "
            f"mean_time={r['mean_time']:.6g}")
    w.table("analyze", rows)
    return EXIT_OK


def _grid_h(cfg: dict, eps: float) -> float:
    g = cfg["grid"]
    return float(g["h"]) if "h" in g else math.sqrt(eps) / float(g["h_factor"])


def cmd_pde(cfg: dict, w: Writer, log) -> int:
    setup = _setup(cfg)
    if setup.model.dim > 2:
        raise fd.GridError("PDE solves support dimensions 1 and 2")
    ap = cfg["approx"]
    rows, lrows = [], []
    for eps in cfg["epsilons"]:
        h = _grid_h(cfg, eps)
        row = pipeline.capacity_row(setup, eps, h=h, K=ap.get("K"), eta=ap.get("eta"),
                                    scheme=cfg["grid"]["scheme"], keep_fields=True)
        lrow = pipeline.landscape_row(setup, eps, h=h)
        _, wfield = pipeline.landscape_value(setup, eps, h)
        fields = dict(row.pop("_fields"), w=wfield)
        for role, fld in fields.items():
            w.put(f"fields/{role}_eps{_eps_tag(eps)}.fpcg", fieldio.discrete_field_bytes(fld))
            if "csv" in w.formats:
                w.put(f"fields/{role}_eps{_eps_tag(eps)}.csv",
                      fieldio.field_csv(fld.array(), fld.grid.origin, fld.grid.h))
        rows.append(row)
        lrows.append(lrow)
        log(f"pde eps={eps:g}: cap={row['cap_dirichlet']:.6g} flux={row['cap_flux']:.6g} "
            f"adjoint={row['cap_adjoint']:.6g} J_min={row['J_minimizer']:.6g} "
            f"cap/sharp={row['ratio_to_sharp']:.4f} w(m1)/EK={lrow['ratio_w_ek']:.4f}")
    w.table("pde", rows)
    w.table("landscape", lrows)
    return EXIT_OK


def cmd_mc(cfg: dict, w: Writer, log) -> int:
    model = build_model(cfg["model"])
    m = cfg["mc"]
    rows = []
    if model.is_elliptic:
        setup = pipeline.prepare(model, cfg["model"].get("box"), cfg["model"].get("start_well", "right"))
        for eps in cfg["epsilons"]:
            row, st = pipeline.mc_row(setup, eps, m["n_paths"], m["seed"], dt=m.get("dt"),
                                      radius=m.get("radius"), backend=m.get("backend"))
            rows.append(row)
            w.put(f"samples_eps{_eps_tag(eps)}.csv", st.to_csv())
            log(f"mc eps={eps:g}: mean={row['mean']:.6g} ci=({row['ci_lo']:.6g}, {row['ci_hi']:.6g}) "
                f"EK={row['EK_time']:.6g} censored={row['n_censored']}")
    else:
        if "t_max" not in m:
            raise ConfigError("the underdamped demo needs mc.t_max", "/mc")
        box = cfg["model"].get("box") or [(-3.0, 3.0)] * model.dim
        tw = two_well(model, box, cfg["model"].get("start_well", "right"))
        for eps in cfg["epsilons"]:
            radius = m.get("radius", eps)
            dt = m.get("dt")
            if dt is None:
                probe = mc.SimConfig(eps, 1.0, 1.0, tw.m1.location, tw.m0.location[:1], radius, 1,
                                     target_dims=(0,))
                md = mc.max_drift(model, mc.sim_box(probe))
                dt = min(eps / 10, 0.01 / md)
            cfg_sim = mc.SimConfig(eps, dt, m["t_max"], tw.m1.location, tw.m0.location[:1], radius,
                                   m["n_paths"], seed=m["seed"], model_kind="underdamped_demo",
                                   target_dims=(0,))
            st = mc.simulate_underdamped_demo(cfg_sim, model, backend=m.get("backend"))
            row = {"epsilon": eps, "dt": dt, "EK_time": math.nan}
            row.update(st.as_dict())
            rows.append(row)
            w.put(f"samples_eps{_eps_tag(eps)}.csv", st.to_csv())
            log(f"mc (underdamped) eps={eps:g}: mean={row['mean']:.6g} censored={row['n_censored']}")
    w.table("mc", rows)
    return EXIT_OK


def cmd_compare(cfg: dict, w: Writer, log) -> int:
    mc_rows = _read_table(w.out, "mc")
    l_rows = _read_table(w.out, "landscape")
    if not mc_rows:
        raise PipelineError("Monte Carlo table is empty")
    if not l_rows:
        raise PipelineError("landscape table is empty")
    land = {float(r["epsilon"]): r for r in l_rows}
    rows = []
    for r in mc_rows:
        eps = float(r["epsilon"])
        if eps not in land:
            raise PipelineError(f"no landscape result for eps={eps:g}")
        ek = float(r["EK_time"])
        wv = float(land[eps]["w_m1_extrapolated"])
        mean, lo, hi = float(r["mean"]), float(r["ci_lo"]), float(r["ci_hi"])
        rmc, rw = mean / ek, wv / ek
        rows.append({
            "epsilon": eps, "EK_time": ek, "w_m1_pde": wv, "MC_mean": mean, "MC_ci_lo": lo, "MC_ci_hi": hi,
            "ratio_mc_ek": rmc, "ratio_w_ek": rw,
            "pass_mc_ek": MC_EK_BAND[0] <= rmc <= MC_EK_BAND[1],
            "pass_w_ek": W_EK_BAND[0] <= rw <= W_EK_BAND[1],
            "pass_ci_covers_w": lo <= wv <= hi,
        })
        log(f"compare eps={eps:g}: MC/EK={rmc:.4f} w/EK={rw:.4f} CI covers w: {lo <= wv <= hi}")
    w.table("compare", rows)
    return EXIT_OK


COMMANDS = {"check": cmd_check, "analyze": cmd_analyze, "pde": cmd_pde, "mc": cmd_mc, "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fpcap", description="Capacity and transition-time toolkit.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides 'outputs')")
    p.add_argument("--seed", type=int, help="Monte Carlo master seed")
    p.add_argument("--grid-h", type=float, help="grid spacing (overrides grid.h)")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    log = (lambda msg: None) if args.quiet else (lambda msg: print(msg, flush=True))
    err = lambda msg: print(f"fpcap: {msg}", file=sys.stderr)  # noqa: E731
    try:
        cfg = load(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be non-negative", "/mc/seed")
            cfg["mc"]["seed"] = args.seed
        if args.grid_h is not None:
            if args.grid_h <= 0:
                raise ConfigError("grid spacing must be positive", "/grid/h")
            cfg["grid"]["h"] = args.grid_h
        if args.out is not None:
            cfg["outputs"] = args.out
    except (ConfigError, OSError) as exc:
        err(f"configuration error: {exc}")
        return EXIT_CONFIG
    w = Writer(Path(cfg["outputs"]), cfg["formats"])
    try:
        code = COMMANDS[args.command](cfg, w, log)
    except ConfigError as exc:
        err(f"configuration error: {exc}")
        return EXIT_CONFIG
    except (DegenerateCriticalPointError, StructureError, UnreachableTargetError) as exc:
        err(f"critical-point analysis failed: {exc}")
        return EXIT_LANDSCAPE
    except (fd.GridError, fd.SchemeError, fd.SolverError, approx.GeometryError,
            approx.AdmissibilityError) as exc:
        err(f"PDE stage failed: {exc}")
        return EXIT_PDE
    except ModelError as exc:
        if args.command in ("analyze", "pde", "mc"):
            err(f"critical-point analysis failed: {exc}")
            return EXIT_LANDSCAPE
        err(f"model error: {exc}")
        return EXIT_CONFIG
    except (PipelineError, mc.SimulationError) as exc:
        err(f"pipeline error: {exc}")
        return EXIT_PIPELINE
    w.manifest(args.command, cfg)
    return code


if __name__ == "__main__":
    sys.exit(main())
