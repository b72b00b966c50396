"""Command-line interface.

Subcommands
-----------
simulate   Monte-Carlo estimator sweeps -> CSV of nMSE and normalized CRBs.
bounds     Closed-form CRB/variance grids -> CSV (``--check-fim`` adds the
           numeric Fisher-oracle columns).
enhance    Dereverberate + denoise a multichannel WAV -> mono WAV + JSON
           sidecar (and optional per-frame PSD dump).
metrics    fwSNRseg and LLR between a reference and a processed WAV.

Exit codes: 0 ok, 2 config error, 3 I/O error, 4 numeric failure.

Config files (``--config``) are ``key = value`` lines; flags win over file
values.  Recognized keys:

  seed, threads, out
  sim.n_mics, sim.noise_rank, sim.snapshots, sim.spacing_m,
  sim.frequency_hz, sim.doa_deg, sim.phi_s, sim.phi_r, sim.noise_power,
  sim.trials, sim.n_training, sim.sweep, sim.grid
  bounds.scenes, bounds.check_fim
  geometry.ula.n, geometry.ula.spacing_m, geometry.positions
      (positions: semicolon-separated x,y,z triples in meters)
  stft.window_ms, stft.overlap
  enhance.variant, enhance.noise_seconds, enhance.noise_rank,
  enhance.alpha, enhance.beta, enhance.gain_floor_db, enhance.doa_deg
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import re
import sys

import numpy as np

from . import __version__, audio, bounds, config as cfgmod, enhance, metrics, model, simulate
from .errors import ConfigError, DegenerateGeometryError, NumericsError
from .stft import StftConfig

_KNOWN_KEYS = (
    "seed", "threads", "out",
    "sim.n_mics", "sim.noise_rank", "sim.snapshots", "sim.spacing_m",
    "sim.frequency_hz", "sim.doa_deg", "sim.phi_s", "sim.phi_r",
    "sim.noise_power", "sim.trials", "sim.n_training", "sim.sweep", "sim.grid",
    "bounds.scenes", "bounds.check_fim",
    "geometry.ula.n", "geometry.ula.spacing_m", "geometry.positions",
    "stft.window_ms", "stft.overlap",
    "enhance.variant", "enhance.noise_seconds", "enhance.noise_rank",
    "enhance.alpha", "enhance.beta", "enhance.gain_floor_db", "enhance.doa_deg",
)


def _load_config(path) -> dict[str, str]:
    if path is None:
        return {}
    values = cfgmod.parse_config_file(path)
    cfgmod.check_known_keys(values, _KNOWN_KEYS)
    return values


def _pick(file_values: dict, key: str, flag_value, default, kind):
    """Flag beats file beats default."""
    if flag_value is not None:
        return flag_value
    if key in file_values:
        return cfgmod.coerce(file_values[key], kind)
    return default


def _parse_grid(text: str) -> list[float]:
    if not text.strip():
        raise ConfigError("empty sweep grid")
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad grid value in {text!r}") from exc


def _scenario_from(args, values) -> simulate.ScenarioConfig:
    doa_deg = _pick(values, "sim.doa_deg", args.doa_deg, 0.0, float)
    try:
        return _build_scenario(args, values, doa_deg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_scenario(args, values, doa_deg) -> simulate.ScenarioConfig:
    return simulate.ScenarioConfig(
        n_mics=_pick(values, "sim.n_mics", args.n_mics, 8, int),
        noise_rank=_pick(values, "sim.noise_rank", args.noise_rank, 2, int),
        snapshots=_pick(values, "sim.snapshots", args.snapshots, 100, int),
        spacing_m=_pick(values, "sim.spacing_m", args.spacing_m, 0.06, float),
        frequency_hz=_pick(values, "sim.frequency_hz", args.frequency_hz, 2000.0, float),
        doa_rad=np.deg2rad(doa_deg),
        phi_s=_pick(values, "sim.phi_s", args.phi_s, 0.5, float),
        phi_r=_pick(values, "sim.phi_r", args.phi_r, 0.5, float),
        noise_power=_pick(values, "sim.noise_power", args.noise_power, 0.5, float),
        trials=_pick(values, "sim.trials", args.trials, 1000, int),
        seed=_pick(values, "seed", args.seed, 0, int),
        n_training=_pick(values, "sim.n_training", args.n_training, 64, int),
    )


def _scenario_metadata(cfg: simulate.ScenarioConfig, extra: dict) -> dict:
    meta = {f"sim.{f.name}": cfgmod.fmt9(getattr(cfg, f.name))
            for f in dataclasses.fields(cfg)
            if f.name not in ("seed", "coherence_loading", "train_with_reverb")}
    meta["seed"] = cfg.seed
    meta["sim.coherence_loading"] = cfgmod.fmt9(cfg.coherence_loading)
    meta["sim.train_with_reverb"] = str(cfg.train_with_reverb).lower()
    meta.update(extra)
    return meta


def cmd_simulate(args) -> int:
    values = _load_config(args.config)
    cfg = _scenario_from(args, values)
    sweep = _pick(values, "sim.sweep", args.sweep, "snapshots", str)
    grid_text = _pick(values, "sim.grid", args.grid, str(cfg.snapshots), str)
    grid = _parse_grid(grid_text)
    threads = _pick(values, "threads", args.threads, 1, int)
    out = _pick(values, "out", args.out, "simulate.csv", str)
    if sweep not in simulate.SWEEPS:
        raise ConfigError(f"unknown sweep {sweep!r}; choose from {simulate.SWEEPS}")

    result = simulate.run_sweep(cfg, sweep, grid, threads=threads)
    meta = _scenario_metadata(cfg, {
        "sweep": sweep, "grid": grid_text, "threads": threads,
        "note": "crb columns are normalized and averaged over the drawn scenes",
    })
    cfgmod.write_csv(out, meta, simulate.SweepResult.COLUMNS, result.table())
    print(f"wrote {out} ({len(result.rows)} rows)")
    return 0


def cmd_bounds(args) -> int:
    values = _load_config(args.config)
    cfg = _scenario_from(args, values)
    sweep = _pick(values, "sim.sweep", args.sweep, "snapshots", str)
    grid_text = _pick(values, "sim.grid", args.grid, str(cfg.snapshots), str)
    grid = _parse_grid(grid_text)
    scenes = _pick(values, "bounds.scenes", args.scenes, 25, int)
    check_fim = args.check_fim or cfgmod.coerce(
        values.get("bounds.check_fim", "false"), bool)
    out = _pick(values, "out", args.out, "bounds.csv", str)
    if sweep not in simulate.SWEEPS:
        raise ConfigError(f"unknown sweep {sweep!r}; choose from {simulate.SWEEPS}")

    columns = ["sweep_param", "value", "crb_phiR", "crb_phiS", "crb_psi_mean",
               "var_phiR", "var_phiS", "var_psi_mean"]
    if check_fim:
        columns += ["fim_phiR", "fim_phiS", "fim_psi_mean"]
    columns += ["scenes", "seed"]

    rows = []
    for point_index, value in enumerate(grid):
        point = simulate.config_for_grid_point(cfg, sweep, float(value))
        n, t, length = point.n_mics, point.noise_rank, point.snapshots
        crb_s_list, crb_psi_list = [], []
        fim_r_list, fim_s_list, fim_psi_list = [], [], []
        for scene_idx in range(scenes):
            rng = np.random.default_rng([point.seed, point_index, scene_idx])
            scene = simulate.gen_scene(point, rng)
            v = np.linalg.qr(scene.a_u)[0] if t else np.zeros((n, 0), complex)
            psi_v = v.conj().T @ scene.noise_cov @ v
            closed = bounds.crb_closed_form(scene.g_d, v, scene.gamma,
                                            scene.phi_r, scene.phi_s, psi_v, length)
            crb_s_list.append(closed.crb_phi_s / point.phi_s**2)
            if t:
                crb_psi_list.append(np.mean(closed.crb_psi_diag
                                            / np.diag(psi_v).real**2))
            if check_fim:
                oracle = bounds.fim_numeric(scene.g_d, v, scene.gamma,
                                            scene.phi_r, scene.phi_s, psi_v, length)
                fim_r_list.append(oracle.crb_phi_r / point.phi_r**2)
                fim_s_list.append(oracle.crb_phi_s / point.phi_s**2)
                if t:
                    fim_psi_list.append(np.mean(oracle.crb_psi_diag
                                                / np.diag(psi_v).real**2))
        crb_r = bounds.var_phi_r(1.0, length, n, t)
        crb_s = float(np.mean(crb_s_list))
        crb_psi = float(np.mean(crb_psi_list)) if crb_psi_list else 0.0
        row = [sweep, value, crb_r, crb_s, crb_psi, crb_r, crb_s, crb_psi]
        if check_fim:
            row += [float(np.mean(fim_r_list)), float(np.mean(fim_s_list)),
                    float(np.mean(fim_psi_list)) if fim_psi_list else 0.0]
        row += [scenes, point.seed]
        rows.append(row)

    meta = _scenario_metadata(cfg, {
        "sweep": sweep, "grid": grid_text, "bounds.scenes": scenes,
        "bounds.check_fim": str(check_fim).lower(),
        "note": "normalized, scene-averaged bounds; var duplicates crb (efficient estimators)",
    })
    cfgmod.write_csv(out, meta, columns, rows)
    print(f"wrote {out} ({len(rows)} rows)")
    return 0


def _geometry_from(values: dict, n_channels: int, spacing: float) -> model.ArrayGeometry | None:
    if "geometry.positions" in values:
        triples = [p for p in values["geometry.positions"].split(";") if p.strip()]
        pos = np.array([[float(x) for x in t.split(",")] for t in triples])
        return model.ArrayGeometry(pos)
    if "geometry.ula.n" in values:
        n = cfgmod.coerce(values["geometry.ula.n"], int)
        if n != n_channels:
            raise ConfigError(f"geometry.ula.n={n} but the file has {n_channels} channels")
        d = cfgmod.coerce(values.get("geometry.ula.spacing_m", str(spacing)), float)
        return model.ArrayGeometry.ula(n, d)
    return None


def cmd_enhance(args) -> int:
    values = _load_config(args.config)
    rate, samples, subtype = audio.read_wav(args.input)
    audio.check_rate(rate)
    if samples.shape[1] < 3:
        raise ConfigError("enhancement needs at least 3 channels")

    stft_cfg = StftConfig(
        window_ms=cfgmod.coerce(values.get("stft.window_ms", "32"), float),
        overlap=cfgmod.coerce(values.get("stft.overlap", "0.75"), float),
        sample_rate=rate,
    )
    spacing = _pick(values, "geometry.ula.spacing_m", args.spacing_m, 0.06, float)
    doa_deg = _pick(values, "enhance.doa_deg", args.doa_deg, 0.0, float)
    rank = _pick(values, "enhance.noise_rank", args.rank, None, int)
    if rank is not None and not 0 <= rank <= samples.shape[1] - 2:
        raise ConfigError(f"noise rank must lie in [0, channels-2]; got {rank}")
    enh_cfg = enhance.EnhancerConfig(
        variant=_pick(values, "enhance.variant", args.variant, "nb-dir", str),
        geometry=_geometry_from(values, samples.shape[1], spacing),
        spacing_m=spacing,
        doa_rad=np.deg2rad(doa_deg),
        noise_seconds=_pick(values, "enhance.noise_seconds", args.noise_seconds, 1.0, float),
        noise_rank=rank,
        alpha=_pick(values, "enhance.alpha", args.alpha, 0.7, float),
        beta=_pick(values, "enhance.beta", args.beta, 0.9, float),
        gain_floor_db=_pick(values, "enhance.gain_floor_db", args.gain_floor_db,
                            -15.0, float),
        stft=stft_cfg,
    )
    result = enhance.enhance_signal(samples, enh_cfg)
    audio.write_wav(args.output, rate, result.samples, subtype)

    sidecar = {
        "tool": f"mlpsd {__version__}",
        "input": str(args.input),
        "output": str(args.output),
        "variant": enh_cfg.variant,
        "noise_rank": result.rank,
        "bins": result.n_bins,
        "frames": result.n_frames,
        "channels": samples.shape[1],
        "noise_seconds": enh_cfg.noise_seconds,
        "alpha": enh_cfg.alpha,
        "beta": enh_cfg.beta,
        "gain_floor_db": enh_cfg.gain_floor_db,
        "doa_deg": doa_deg,
        "spacing_m": spacing,
        "stft_window_ms": stft_cfg.window_ms,
        "stft_overlap": stft_cfg.overlap,
    }
    with open(str(args.output) + ".json", "w", encoding="utf-8") as handle:
        json.dump(sidecar, handle, indent=None, sort_keys=True)
        handle.write("\n")
    if args.dump_psd:
        rows = [(log.frame, log.mean_phi_r, log.mean_phi_s, log.mean_psi_trace,
                 log.mean_gain) for log in result.logs]
        cfgmod.write_csv(args.dump_psd, {k: str(v) for k, v in sidecar.items()},
                         ("frame", "mean_phi_r", "mean_phi_s", "mean_psi_trace",
                          "mean_gain"), rows)
    print(f"wrote {args.output} (variant={enh_cfg.variant}, T={result.rank}, "
          f"bins={result.n_bins}, frames={result.n_frames})")
    return 0


def cmd_metrics(args) -> int:
    rate_ref, ref, _ = audio.read_wav(args.reference)
    rate_deg, deg, _ = audio.read_wav(args.degraded)
    audio.check_rate(rate_ref)
    if rate_ref != rate_deg:
        raise ConfigError("sample rates differ between the two files")
    fw = metrics.fwsnrseg(ref[:, 0], deg[:, 0], fs=rate_ref)
    lr = metrics.llr(ref[:, 0], deg[:, 0], fs=rate_ref)
    if args.json:
        print(json.dumps({"fwsnrseg_db": fw, "llr": lr}, sort_keys=True))
    else:
        print(f"fwsnrseg_db = {cfgmod.fmt9(fw)}")
        print(f"llr = {cfgmod.fmt9(lr)}")
    return 0


def _allow_negative_grids(parser: argparse.ArgumentParser) -> None:
    # let values like "-20,-10,0" pass as arguments instead of option strings
    parser._negative_number_matcher = re.compile(r"^-\d+[\d.,eE+-]*$")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlpsd", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"mlpsd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte-Carlo estimator sweeps")
    sim.add_argument("--config")
    sim.add_argument("--sweep", choices=simulate.SWEEPS)
    sim.add_argument("--grid", help="comma-separated grid values (dB for ratio sweeps)")
    sim.add_argument("--trials", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--threads", type=int)
    sim.add_argument("--out")
    for flag, kind in (("--n-mics", int), ("--noise-rank", int), ("--snapshots", int),
                       ("--spacing-m", float), ("--frequency-hz", float),
                       ("--doa-deg", float), ("--phi-s", float), ("--phi-r", float),
                       ("--noise-power", float), ("--n-training", int)):
        sim.add_argument(flag, type=kind)
    _allow_negative_grids(sim)
    sim.set_defaults(func=cmd_simulate)

    bnd = sub.add_parser("bounds", help="CRB/variance grids")
    bnd.add_argument("--config")
    bnd.add_argument("--sweep", choices=simulate.SWEEPS)
    bnd.add_argument("--grid")
    bnd.add_argument("--scenes", type=int)
    bnd.add_argument("--check-fim", action="store_true",
                     help="add numeric Fisher-oracle columns")
    bnd.add_argument("--seed", type=int)
    bnd.add_argument("--out")
    for flag, kind in (("--n-mics", int), ("--noise-rank", int), ("--snapshots", int),
                       ("--spacing-m", float), ("--frequency-hz", float),
                       ("--doa-deg", float), ("--phi-s", float), ("--phi-r", float),
                       ("--noise-power", float), ("--n-training", int),
                       ("--trials", int), ("--threads", int)):
        bnd.add_argument(flag, type=kind)
    _allow_negative_grids(bnd)
    bnd.set_defaults(func=cmd_bounds)

    enh = sub.add_parser("enhance", help="dereverberate and denoise a WAV file")
    enh.add_argument("input")
    enh.add_argument("output")
    enh.add_argument("--config")
    enh.add_argument("--variant", choices=enhance.VARIANTS)
    enh.add_argument("--noise-seconds", type=float)
    enh.add_argument("--rank", type=int, help="noise rank T (default: auto)")
    enh.add_argument("--doa-deg", type=float)
    enh.add_argument("--spacing-m", type=float)
    enh.add_argument("--alpha", type=float)
    enh.add_argument("--beta", type=float)
    enh.add_argument("--gain-floor-db", type=float)
    enh.add_argument("--dump-psd", help="write per-frame PSD diagnostics CSV")
    enh.set_defaults(func=cmd_enhance)

    met = sub.add_parser("metrics", help="fwSNRseg and LLR between two WAVs")
    met.add_argument("reference")
    met.add_argument("degraded")
    met.add_argument("--json", action="store_true")
    met.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except (NumericsError, DegenerateGeometryError, np.linalg.LinAlgError,
            ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
