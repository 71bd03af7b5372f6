"""Command-line interface: ``driftbayes {simulate,infer,contract,diag,plot}``."""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import experiments
from .augment import AugmentConfig, run_augmented_gibbs
from .basis import Fourier
from .config import RunConfig
from .diagnostics import acceptance_summary, summarize
from .errors import ConfigError, DriftBayesError
from .hierarchical import HierPrior, run_chain
from .likelihood import sufficient_statistics
from .paths import (read_observations_csv, read_path_csv, simulate_path, write_observations_csv,
                    write_path_csv)
from .posterior import credible_bands, posterior
from .rng import BANDS, CHAIN, SIMULATE, stream


class Outputs:
    """Tracks files written by a command so they can be removed on failure."""

    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.files: list[Path] = []
        self._made_dir = not out_dir.exists()

    def path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        self.files.append(p)
        return p

    def cleanup(self) -> None:
        for p in self.files:
            p.unlink(missing_ok=True)
        if self._made_dir and self.dir.exists() and not any(self.dir.iterdir()):
            self.dir.rmdir()


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("driftbayes", "numpy", "scipy"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _write_json(dest: Path, obj) -> None:
    dest.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _x_grid(cfg: RunConfig, family) -> np.ndarray:
    b = cfg["bands"]
    lo, hi = (b["lo"], b["hi"]) if b["lo"] is not None else family.quadrature_interval()
    return np.linspace(lo, hi, b["n_grid"])


def _is_observation_file(path: Path) -> bool:
    with open(path) as fh:
        return fh.readline().startswith("# delta=")


def _summary_stats(values: np.ndarray) -> dict:
    return {"min": float(values.min()), "max": float(values.max()), "mean": float(values.mean())}


# -- commands -----------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, out: Outputs) -> dict:
    s = cfg["simulate"]
    drift = cfg.drift()
    path = simulate_path(drift, s["x0"], s["T"], s["n_steps"], stream(cfg.seed, SIMULATE))
    obs = path.subsample(s["obs_every"])
    write_path_csv(path, out.path("path.csv"))
    write_observations_csv(obs, out.path("observations.csv"))
    summary = {"T": path.duration, "n_steps": path.n_steps, "n_obs": obs.n, "delta": obs.delta,
               "range": [float(path.values.min()), float(path.values.max())]}
    print(f"simulated T={summary['T']:g} n={summary['n_steps']} "
          f"range=[{summary['range'][0]:.4g}, {summary['range'][1]:.4g}] observations={obs.n + 1}")
    return {"summary": summary}


def cmd_infer(cfg: RunConfig, out: Outputs) -> dict:
    data = cfg["data"]
    src = data["observations"] or data["path"]
    if src is None:
        raise ConfigError("infer needs data.path or data.observations (or --data)")
    src = Path(src)
    family = cfg.family()
    prior = cfg.prior()
    grid = _x_grid(cfg, family)
    level = cfg["bands"]["level"]
    mc = cfg["mcmc"]
    report: dict = {}

    if _is_observation_file(src):
        obs = read_observations_csv(src)
        acfg = AugmentConfig(mc["inner_steps"], mc["mh_sweeps"], mc["n_iter"], mc["burn_in"], mc["thinning"])
        chain = run_augmented_gibbs(obs, prior, acfg, stream(cfg.seed, CHAIN), family=family)
        bands = experiments.chain_bands(chain.drift_values(grid), grid, level)
        chain.write_trace_csv(out.path("trace.csv"))
        cols = {"loglik": chain.loglik}
        if isinstance(prior, HierPrior):
            cols["s2"] = chain.s2
            report["jump_acceptance"] = chain.jump_acceptance
        report["mode"] = "augmented"
        report["bridge_acceptance"] = acceptance_summary(chain.seg_acceptance)
        report["diagnostics"] = summarize(cols)
    else:
        path = read_path_csv(src)
        m = prior.m_max if isinstance(prior, HierPrior) else prior.m
        stats = sufficient_statistics(path, family, m)
        out_stats = out.path("stats.json")
        out_stats.write_text(stats.to_json() + "\n")
        if isinstance(prior, HierPrior):
            chain = run_chain(stats, prior, mc["n_iter"], mc["burn_in"], mc["thinning"],
                              stream(cfg.seed, CHAIN), x_grid=grid)
            bands = experiments.chain_bands(chain.drift, grid, level)
            chain.write_trace_csv(out.path("trace.csv"))
            chain.write_drift_csv(out.path("drift.csv"))
            report["mode"] = "continuous-hierarchical"
            report["jump_acceptance"] = chain.jump_acceptance
            report["model_frequencies"] = chain.model_frequencies().tolist()
            report["diagnostics"] = summarize({"s2": chain.s2, "loglik": chain.loglik})
        else:
            post = posterior(stats, prior)
            n_draws = cfg["bands"]["n_draws"]
            bands = credible_bands(post, family, grid, level, n_draws, stream(cfg.seed, BANDS))
            out.path("posterior.json").write_text(post.to_json() + "\n")
            report["mode"] = "continuous-conjugate"
            if n_draws:
                width = np.maximum(bands.width, 1e-300)
                report["mc_band_discrepancy"] = float(np.max(np.maximum(
                    abs(bands.mc_lower - bands.lower), abs(bands.mc_upper - bands.upper)) / width))
    bands.to_csv(out.path("bands.csv"))
    report["band_width"] = _summary_stats(bands.width)
    print(f"{report['mode']}: mean band width {report['band_width']['mean']:.4g} at level {level}")
    return report


def cmd_contract(cfg: RunConfig, out: Outputs) -> dict:
    c = cfg["contract"]
    prior = cfg.prior()
    if isinstance(prior, HierPrior) or not isinstance(cfg.family(), Fourier):
        raise ConfigError("contract needs a conjugate prior on the fourier basis")
    d = cfg["drift"]
    if d["kind"] == "basis" and d.get("family", "fourier").split()[0] == "fourier":
        truth = d["coeffs"]
    elif d["kind"] == "butane":
        truth = cfg.drift().coeffs.tolist()
    else:
        truth = list(experiments.SMOOTH_FOURIER)
    res = experiments.contraction_experiment(truth, c["horizons"], c["n_seeds"], c["dt"], c["x0"],
                                             prior, cfg.seed)
    res["truth"] = [float(v) for v in truth]
    _write_json(out.path("contract.json"), res)
    for T, e in zip(res["horizons"], res["mean_error"]):
        print(f"T={T:g}  mean L2 error {e:.4g}")
    if res["slope"] is not None:
        se = "" if res["slope_se"] is None else f" (se {res['slope_se']:.3g})"
        print(f"log-log slope {res['slope']:.4g}{se}")
    return {"summary": {k: res[k] for k in ("mean_error", "slope", "slope_se", "strictly_decreasing")}}


def _read_trace(path: Path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(float, r)) for r in reader if r]
    if not rows:
        return {h: np.empty(0) for h in header}
    arr = np.asarray(rows)
    return {h: arr[:, i] for i, h in enumerate(header)}


def cmd_diag(cfg: RunConfig, out: Outputs) -> dict:
    d = cfg["diag"]
    if d["trace"] is None:
        raise ConfigError("diag needs diag.trace (or --trace)")
    cols = _read_trace(Path(d["trace"]))
    acc = {k: v for k, v in cols.items() if k.startswith("acc_rate_seg_")}
    names = d["columns"] or [k for k in cols if k not in acc and k != "iter" and np.all(np.isfinite(cols[k]))]
    missing = [n for n in names if n not in cols]
    if missing:
        raise ConfigError(f"trace has no column(s) {missing}")
    res = {"columns": summarize({n: cols[n] for n in names}, d["ess_threshold"], d["rhat_threshold"])}
    if acc:
        res["bridge_acceptance"] = acceptance_summary([v[-1] for v in acc.values()])
    _write_json(out.path("diag.json"), res)
    for n, r in res["columns"].items():
        flag = " (degenerate)" if r["degenerate"] else ""
        print(f"{n}: ESS {r['ess']:.1f}{flag}  split R-hat {r['rhat']:.4f}")
    return {"diagnostics": res}


def cmd_plot(cfg: RunConfig, out: Outputs) -> dict:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .posterior import Bands

    p = cfg["plot"]
    if p["bands"] is None:
        raise ConfigError("plot needs plot.bands (or --bands)")
    bands = Bands.from_csv(p["bands"])
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(bands.x, bands.mean, color="C0", label="posterior mean")
    ax.plot(bands.x, bands.lower, "--", color="C0", lw=0.8, label="credible band")
    ax.plot(bands.x, bands.upper, "--", color="C0", lw=0.8)
    if p.get("truth"):
        ax.plot(bands.x, cfg.drift()(bands.x), color="k", lw=0.8, label="true drift")
    ax.set_xlabel("x")
    ax.set_ylabel("b(x)")
    if p["title"]:
        ax.set_title(p["title"])
    ax.legend(frameon=False)
    fig.tight_layout()
    dest = out.path(p["output"] or "bands.png")
    fig.savefig(dest, dpi=120, metadata={"Software": None})
    plt.close(fig)
    print(f"wrote {dest}")
    return {}


HEADERS = {"path.csv": "t,x", "bands.csv": "x,mean,lower,upper", "trace.csv": "iter,j,s2,loglik"}


def validate_outputs(files) -> None:
    """Re-read written files and check their headers and JSON syntax."""
    for p in files:
        name = p.name
        if name.endswith(".json"):
            json.loads(p.read_text())
        elif name == "observations.csv":
            with open(p) as fh:
                first, second = fh.readline(), fh.readline()
            float(first.partition("=")[2])
            if not first.startswith("# delta=") or second.strip() != "k,x":
                raise ValueError(f"{p} does not follow the observation schema")
        elif name in HEADERS:
            with open(p) as fh:
                head = fh.readline().strip()
            if not head.startswith(HEADERS[name]):
                raise ValueError(f"{p} has header {head!r}, expected {HEADERS[name]!r}")
        elif not p.exists():
            raise ValueError(f"{p} was not written")


COMMANDS = {"simulate": cmd_simulate, "infer": cmd_infer, "contract": cmd_contract,
            "diag": cmd_diag, "plot": cmd_plot}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="driftbayes", description="Bayesian drift estimation for 1-d diffusions.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON config (comment lines allowed)")
        sp.add_argument("--seed", type=int, help="root seed (overrides the config)")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        if name == "infer":
            sp.add_argument("--data", type=Path, help="path CSV or observation CSV")
        if name == "diag":
            sp.add_argument("--trace", type=Path, help="trace CSV")
        if name == "plot":
            sp.add_argument("--bands", type=Path, help="bands CSV")
    return parser


def _load_config(args) -> RunConfig:
    raw = RunConfig.load(args.config).raw if args.config is not None else RunConfig().raw
    if args.seed is not None:
        raw["seed"] = args.seed
    if getattr(args, "data", None) is not None:
        key = "observations" if _is_observation_file(args.data) else "path"
        raw["data"] = {"path": None, "observations": None, key: str(args.data)}
    if getattr(args, "trace", None) is not None:
        raw["diag"]["trace"] = str(args.trace)
    if getattr(args, "bands", None) is not None:
        raw["plot"]["bands"] = str(args.bands)
    return RunConfig(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Outputs(args.out)
    t0 = time.perf_counter()
    try:
        cfg = _load_config(args)
        result = COMMANDS[args.command](cfg, out)
        validate_outputs(out.files)
        report = {"command": args.command, "config": cfg.raw, "versions": _versions(),
                  "timings": {"wall_seconds": time.perf_counter() - t0},
                  "outputs": [p.name for p in out.files], **result}
        report_path = out.path(f"{args.command}_report.json")
        _write_json(report_path, report)
        validate_outputs([report_path])
    except ConfigError as exc:
        out.cleanup()
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DriftBayesError, OSError, ValueError) as exc:
        out.cleanup()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        out.cleanup()
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
