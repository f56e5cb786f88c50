"""Command-line pipeline.

Every stage reads the run config plus upstream containers from the output
directory and writes one ``.osmm`` container (with JSON sidecar) per output.

Exit codes: 0 success, 2 config error, 3 missing input, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, container, encode, phantom, pipeline, study
from .config import METHODS, ConfigError, RunConfig
from .encode import KSpaceData, SamplingPattern, SensitivityMaps
from .manifold import Dictionary, build_dictionary
from .physics import SequenceParams, simulate_isochromats
from .recon import SweepError

log = logging.getLogger("ossimm")

EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 2, 3, 4


class MissingInput(RuntimeError):
    pass


# --------------------------------------------------------------------------
# file helpers
# --------------------------------------------------------------------------


def _meta(cfg: RunConfig, stage: str, **extra) -> dict:
    return {"stage": stage, "config_hash": container.config_hash(cfg.data),
            "tool_version": __version__, **extra}


def _need(cfg: RunConfig, name: str, stage: str) -> Path:
    path = cfg.output_dir / name
    if not path.is_file():
        raise MissingInput(f"missing {path}; run `ossimm {stage}` first")
    return path


def _write(cfg: RunConfig, name: str, arrays: dict, meta: dict) -> Path:
    path = container.write(cfg.output_dir / name, arrays, meta)
    log.info("wrote %s", path)
    return path


def load_dictionary(cfg: RunConfig) -> Dictionary:
    path = _need(cfg, "dictionary.osmm", "build-dict")
    meta = container.read_meta(path)
    return Dictionary.from_arrays(container.read(path), SequenceParams(**meta["sequence"]),
                                  meta["t1_s"])


def load_truth(cfg: RunConfig) -> phantom.PhantomSeries:
    return phantom.PhantomSeries.from_arrays(container.read(_need(cfg, "phantom.osmm", "phantom")))


def load_kspace(cfg: RunConfig):
    a = container.read(_need(cfg, "kspace.osmm", "acquire"))
    sens = SensitivityMaps(a["sens"])
    sigma = float(a["sigma"][0])
    shape = sens.shape
    data = []
    for s in range(a["samples"].shape[0]):
        if "masks" in a:
            pat = SamplingPattern.cartesian(a["masks"][s].astype(bool))
        else:
            pat = SamplingPattern.nonuniform(list(a["coords"][s]), shape)
        data.append(KSpaceData(a["samples"][s], pat, sigma))
    return data, sens


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------


def cmd_simulate_signal(cfg: RunConfig, args) -> None:
    seq = cfg.sequence()
    sig = cfg["signal"]
    rows, signals = [], []
    for t1, t2, f0 in itertools.product(sig["t1_ms"], sig["t2_ms"], sig["f0_hz"]):
        s = simulate_isochromats(seq, t1 / 1000.0, t2 / 1000.0, [f0], sig["n_periods"])[0]
        rows.append((t1, t2, f0))
        signals.append(s)
    signals = np.asarray(signals)
    params = np.asarray(rows, dtype=np.float64)
    _write(cfg, "signals.osmm", {"signals": signals, "params_t1_t2_f0": params},
           _meta(cfg, "simulate-signal", sequence=seq.to_dict()))
    table = []
    for (t1, t2, f0), s in zip(rows, signals):
        peak = np.abs(s).max()
        for n, v in enumerate(s):
            table.append({"t1_ms": t1, "t2_ms": t2, "f0_hz": f0, "n": n, "re": v.real,
                          "im": v.imag, "abs": abs(v),
                          "abs_norm": abs(v) / peak if peak > 0 else 0.0})
    analysis.write_csv(cfg.output_dir / "signals.csv", table,
                       ("t1_ms", "t2_ms", "f0_hz", "n", "re", "im", "abs", "abs_norm"))


def cmd_build_dict(cfg: RunConfig, args) -> None:
    seq = cfg.sequence()
    grid = cfg.dictionary_grid()
    k, f_max = cfg.cauchy
    d = build_dictionary(seq, grid, k, f_max)
    _write(cfg, "dictionary.osmm", d.to_arrays(),
           _meta(cfg, "build-dict", sequence=seq.to_dict(), t1_s=grid.fixed_t1_s,
                 cauchy_k=k, f_max_hz=f_max, n_atoms=len(d)))


def cmd_phantom(cfg: RunConfig, args) -> None:
    spec = cfg.phantom_spec()
    k, f_max = cfg.cauchy
    series = phantom.generate_series(spec, cfg.sequence(), k, f_max, cfg.n_frames)
    _write(cfg, "phantom.osmm", series.to_arrays(),
           _meta(cfg, "phantom", spec=spec.to_dict(), n_frames=series.n_frames))


def cmd_acquire(cfg: RunConfig, args) -> None:
    truth = load_truth(cfg)
    spec = cfg.phantom_spec()
    samp = cfg["sampling"]
    seeds = cfg["seeds"]
    sens = encode.synthetic_sensitivities(truth.shape, cfg.n_coils)
    pats = pipeline.make_patterns(truth.shape, truth.images.shape[2], truth.n_frames,
                                  samp["accel"], seeds["sampling"], samp["kind"], samp["jitter"],
                                  center_radius=samp["center_radius"], power=samp["power"],
                                  scale=samp["scale"])
    sigma = phantom.noise_sigma_for_tsnr(truth.images, truth.support, spec.tsnr_db)
    data = pipeline.acquire_series(truth.images, sens, pats, sigma, seeds["noise"])
    arrays = {"samples": np.stack([d.samples for d in data]), "sens": sens.maps,
              "sigma": np.array([sigma])}
    if samp["kind"] == "cartesian":
        arrays["masks"] = np.stack([p.masks for p in pats])
    else:
        arrays["coords"] = np.stack([np.stack(p.coords) for p in pats])
    _write(cfg, "kspace.osmm", arrays, _meta(cfg, "acquire", sigma=sigma, n_sets=len(data)))


def cmd_recon(cfg: RunConfig, args) -> None:
    method = args.method
    data, sens = load_kspace(cfg)
    rc = cfg["recon"]
    init = args.init or rc["init"]
    ossimm, lowrank = cfg.ossimm(), cfg.lowrank()
    lam = rc["cgsense"]["lambda"]
    if args.outer is not None:
        ossimm.n_outer = args.outer
    if args.cg is not None:
        ossimm.n_cg = args.cg
    if args.beta is not None:
        ossimm.beta = args.beta
    if args.alpha is not None:
        lowrank.alpha = args.alpha
    if args.lam is not None:
        lam = args.lam
    if args.auto:
        ossimm.beta, lowrank.alpha, lam = None, None, None
    for name, v in (("beta", ossimm.beta), ("alpha", lowrank.alpha), ("lambda", lam)):
        if v is not None and v < 0:
            raise ConfigError(f"{name} must be nonnegative, got {v}")
    d = load_dictionary(cfg) if method == "ossimm" else None
    rec = pipeline.reconstruct_series(data, sens, method, d, ossimm, lowrank, lam,
                                      rc["cgsense"]["n_iters"], init, rc["window"])
    if "sigma_a" in rec.params:
        log.info("sigma(A) = %.6g", rec.params["sigma_a"])
    for key in ("beta", "alpha", "lambda"):
        if key in rec.params:
            log.info("%s = %.6g", key, rec.params[key])
    width = max(len(c) for c in rec.costs)
    costs = np.full((len(rec.costs), width), np.nan)
    for i, c in enumerate(rec.costs):
        costs[i, :len(c)] = c
    arrays = {"x": rec.x, "costs": costs}
    if rec.maps is not None:
        frames, maps = pipeline.maps_from_recon(rec)
        arrays.update({"map_" + k: v for k, v in maps.items()})
    _write(cfg, f"recon_{method}.osmm", arrays,
           _meta(cfg, "recon", method=method, params=rec.params,
                 n_outer=ossimm.n_outer, n_cg=ossimm.n_cg))


def _method_list(cfg, args):
    return [args.method] if getattr(args, "method", None) else list(cfg["recon"]["methods"])


def cmd_quantify(cfg: RunConfig, args) -> None:
    d = None
    stride = cfg["analysis"]["quantify_stride"]
    for method in _method_list(cfg, args):
        rec = container.read(_need(cfg, f"recon_{method}.osmm", f"recon --method {method}"))
        if "map_r2star_hz" in rec:
            frames = np.arange(rec["x"].shape[0])
            maps = {k[4:]: v for k, v in rec.items() if k.startswith("map_")}
        else:
            d = d or load_dictionary(cfg)
            frames, maps = pipeline.quantify_series(rec["x"], d, stride)
        _write(cfg, f"maps_{method}.osmm", {"frames": frames, **maps},
               _meta(cfg, "quantify", method=method, n_frames=int(frames.size)))


def cmd_analyze(cfg: RunConfig, args) -> None:
    truth = load_truth(cfg)
    acfg = cfg.analysis()
    task = cfg.phantom_spec().task
    rows = []
    render = cfg.output_dir / "renders"
    render.mkdir(parents=True, exist_ok=True)
    for method in _method_list(cfg, args):
        rec = container.read(_need(cfg, f"recon_{method}.osmm", f"recon --method {method}"))
        q = container.read(_need(cfg, f"maps_{method}.osmm", "quantify"))
        maps = {k: v for k, v in q.items() if k != "frames"}
        out, arrays = pipeline.evaluate(truth, rec["x"], q["frames"], maps, task, acfg)
        rows.append({"method": method, **out})
        _write(cfg, f"analysis_{method}.osmm", arrays, _meta(cfg, "analyze", method=method,
                                                             metrics=out))
        ny, nx = truth.shape
        analysis.to_pgm(arrays["r2star_mean"].reshape(ny, nx), render / f"r2star_{method}.pgm",
                        lo=0.0, hi=50.0)
        analysis.to_pgm(arrays["corr"].reshape(ny, nx), render / f"corr_{method}.pgm",
                        lo=-1.0, hi=1.0)
    analysis.write_csv(cfg.output_dir / "metrics.csv", rows, analysis.METRIC_COLUMNS)


def cmd_estimation_modes(cfg: RunConfig, args) -> None:
    scfg = cfg.study()
    rows, series = study.run_estimation_modes(scfg, cfg.sequence())
    arrays = {}
    for mode, maps in series.items():
        for f in ("t2_s", "t2p_s", "r2star_hz", "f0_hz", "m0"):
            arrays[f"{mode}_{f}"] = getattr(maps, f)
    _write(cfg, "estimation_modes.osmm", arrays,
           _meta(cfg, "estimation-modes", study=scfg.to_dict()))
    analysis.write_csv(cfg.output_dir / "estimation_modes.csv", rows, study.STUDY_COLUMNS)


REPORT_COLUMNS = analysis.METRIC_COLUMNS + ("nrmse", "dice", "rmse_mean_map_hz")


def cmd_report(cfg: RunConfig, args) -> None:
    rows = []
    for method in cfg["recon"]["methods"]:
        path = _need(cfg, f"analysis_{method}.osmm", "analyze")
        m = container.read_meta(path)["metrics"]
        rows.append({"method": method, **{c: m.get(c, "") for c in REPORT_COLUMNS[1:]}})
    analysis.write_csv(cfg.output_dir / "report.csv", rows, REPORT_COLUMNS)


def cmd_all(cfg: RunConfig, args) -> None:
    cmd_simulate_signal(cfg, args)
    cmd_build_dict(cfg, args)
    cmd_phantom(cfg, args)
    cmd_acquire(cfg, args)
    for m in cfg["recon"]["methods"]:
        args.method = m
        cmd_recon(cfg, args)
    args.method = None
    cmd_quantify(cfg, args)
    cmd_analyze(cfg, args)
    cmd_report(cfg, args)


COMMANDS = {
    "simulate-signal": cmd_simulate_signal,
    "build-dict": cmd_build_dict,
    "phantom": cmd_phantom,
    "acquire": cmd_acquire,
    "recon": cmd_recon,
    "quantify": cmd_quantify,
    "analyze": cmd_analyze,
    "estimation-modes": cmd_estimation_modes,
    "report": cmd_report,
    "all": cmd_all,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ossimm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ossimm {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("-c", "--config", required=True, help="run config (JSON)")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "recon":
            sp.add_argument("--method", choices=METHODS, required=True)
            sp.add_argument("--beta", type=float)
            sp.add_argument("--alpha", type=float)
            sp.add_argument("--lambda", dest="lam", type=float)
            sp.add_argument("--auto", action="store_true",
                            help="choose beta/alpha/lambda automatically")
            sp.add_argument("--outer", type=int)
            sp.add_argument("--cg", type=int)
            sp.add_argument("--init", choices=("zero", "adjoint", "datashared"))
        elif name in ("quantify", "analyze"):
            sp.add_argument("--method", choices=METHODS)
        elif name == "all":
            sp.set_defaults(beta=None, alpha=None, lam=None, outer=None, cg=None, auto=False,
                            init=None, method=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose or args.command == "recon"
                        else logging.WARNING, format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = RunConfig.load(args.config)
        COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"ossimm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingInput as exc:
        print(f"ossimm: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (SweepError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"ossimm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
