"""Command-line interface: spotform, sweep, render, mix-sir, dump-config."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .acoustics import simulate_rir
from .config import ConfigError, ExperimentConfig, config_from_dict, dump_config, load_config
from .metrics import mix_at_sir, render, run_sweep, scene_rirs, sir_db
from .spotformer import SolverError, process_signals
from .wavio import read_mono, write_csv, write_text, write_wav

log = logging.getLogger("spotformer")


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if args.seed is not None:
        cfg.scene.seed = args.seed
    if args.out_dir is not None:
        cfg.output_dir = str(args.out_dir)
    if getattr(args, "d", None):
        cfg.sweep.d_values = [float(v) for v in args.d]
    return config_from_dict(_as_dict(cfg))


def _as_dict(cfg):
    import yaml
    return yaml.safe_load(dump_config(cfg))


def _inputs(args, cfg: ExperimentConfig, n_channels: int) -> list[str]:
    paths = list(getattr(args, "inputs", None) or cfg.inputs)
    if len(paths) != n_channels:
        raise ConfigError(f"expected {n_channels} input WAVs (one per loudspeaker), got {len(paths)}")
    return paths


def _read_channels(paths, sample_rate: int) -> np.ndarray:
    chans = [read_mono(p, sample_rate) for p in paths]
    lengths = {c.size for c in chans}
    if len(lengths) != 1:
        raise ValueError(f"input WAVs differ in length: {sorted(lengths)}")
    return np.stack(chans, axis=1)


def white_noise(cfg: ExperimentConfig, n_channels: int) -> np.ndarray:
    n = int(round(cfg.sweep.duration * cfg.grid.sample_rate))
    rng = np.random.default_rng([cfg.scene.seed, 1])
    return cfg.sweep.noise_rms * rng.standard_normal((n, n_channels))


def _fmt(v) -> str:
    return repr(float(v))


def cmd_spotform(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output_dir)
    spot = cfg.spotformer()
    grid = spot.grid
    x = _read_channels(_inputs(args, cfg, spot.n_loudspeakers), grid.sample_rate)
    d = cfg.sweep.d_values[-1] if not args.d else float(args.d[-1])
    res = process_signals(spot, x, d, bypass=args.bypass, on_failure=cfg.solver.on_failure,
                          n_jobs=cfg.solver.n_jobs)
    for l in range(spot.n_loudspeakers):
        write_wav(out / f"lsp_{l}.wav", res.signals[:, l], grid.sample_rate)
    rows = [(r.index, _fmt(r.objective), _fmt(r.reference_objective), _fmt(r.max_residual),
             _fmt(r.max_distortion), r.status, r.iterations, int(r.fallback)) for r in res.frames]
    write_csv(out / "frame_log.csv", "frame-log",
              ["frame", "objective", "reference_objective", "max_residual", "max_distortion",
               "status", "iterations", "fallback"], rows,
              comments=[f"d={d!r} bypass={args.bypass}"])
    write_text(out / "config.yaml", dump_config(cfg))
    log.info("wrote %d channels to %s (%d fallback frames)", spot.n_loudspeakers, out,
             res.n_fallbacks)
    return 0


def _write_mixtures(cfg, spot, out: Path, ref_x, lsp_signals):
    """Voice-command mixtures at the reference mic for every command and SIR."""
    scene = spot.scene
    sr = spot.grid.sample_rate
    mic = scene.reference_mic()
    rirs = scene_rirs(scene, sr)
    mic_rirs = [[row[mic]] for row in rirs]
    interf_ref = render(ref_x, mic_rirs).signals[:, 0]
    interf_lsp = render(lsp_signals, mic_rirs).signals[:, 0]
    user_rir = [[simulate_rir(scene.room, scene.user, scene.mic_positions()[mic], sr)]]
    rows = []
    for ci, path in enumerate(cfg.commands):
        cmd = render(read_mono(path, sr), user_rir).signals[:, 0]
        n = max(cmd.size, interf_ref.size)
        cmd = np.pad(cmd, (0, n - cmd.size))
        i_ref = np.pad(interf_ref, (0, n - interf_ref.size))
        i_lsp = np.pad(interf_lsp, (0, n - interf_lsp.size))
        for sir in cfg.sweep.sir_db:
            g = mix_at_sir(cmd, i_ref, sir)
            tag = f"cmd{ci}_sir{sir:+g}"
            # float64 so the stems read back with the exact requested SIR
            write_wav(out / f"{tag}_command.wav", g * cmd, sr, dtype=np.float64)
            write_wav(out / f"{tag}_interferer_ref.wav", i_ref, sr, dtype=np.float64)
            write_wav(out / f"{tag}_interferer_lsp.wav", i_lsp, sr, dtype=np.float64)
            write_wav(out / f"{tag}_mix_ref.wav", g * cmd + i_ref, sr, dtype=np.float64)
            write_wav(out / f"{tag}_mix_lsp.wav", g * cmd + i_lsp, sr, dtype=np.float64)
            rows.append((ci, _fmt(sir), _fmt(g), _fmt(sir_db(g * cmd, i_ref)),
                         _fmt(sir_db(g * cmd, i_lsp))))
    write_csv(out / "mixtures.csv", "mixtures",
              ["command", "sir_db", "gain", "sir_ref_db", "sir_lsp_db"], rows,
              comments=[f"reference microphone {mic}"])


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output_dir)
    spot = cfg.spotformer()
    if cfg.inputs:
        x = _read_channels(cfg.inputs, spot.grid.sample_rate)
    else:
        x = white_noise(cfg, spot.n_loudspeakers)
    sw = cfg.sweep
    runs = args.runs if args.runs is not None else sw.runs
    report = run_sweep(spot.scene, x, sw.d_values, runs=runs,
                       loudspeaker_sigma=sw.loudspeaker_sigma, rotation_sigma=sw.rotation_sigma,
                       seed=cfg.scene.seed, spot=spot, on_failure=cfg.solver.on_failure,
                       n_jobs=cfg.solver.n_jobs)
    rows = []
    for r in report.records:
        for m, v in enumerate(r.per_mic_db):
            rows.append((_fmt(r.d), r.run, m, _fmt(v), _fmt(r.mean_db)))
    for d, (mean, std) in report.summary().items():
        rows.append((_fmt(d), "summary", "all", _fmt(std), _fmt(mean)))
    write_csv(out / "sweep.csv", "sweep", ["d", "run", "mic", "reduction_db", "mean_db"], rows,
              comments=[report.note,
                        "summary rows: reduction_db = std over runs, mean_db = mean over runs"])
    write_text(out / "config.yaml", dump_config(cfg))
    if cfg.commands:
        d = sw.d_values[-1]
        lsp = process_signals(spot, x, d, on_failure=cfg.solver.on_failure,
                              n_jobs=cfg.solver.n_jobs).signals
        _write_mixtures(cfg, spot, out, x, lsp)
    for d, (mean, std) in report.summary().items():
        print(f"d={d:g}: mean reduction {mean:.2f} dB (std {std:.2f} over {runs} runs)")
    return 0


def cmd_render(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output_dir)
    scene = cfg.build_scene()
    sr = cfg.grid.sample_rate
    x = _read_channels(_inputs(args, cfg, scene.n_loudspeakers), sr)
    mics = render(x, scene_rirs(scene, sr))
    for m in range(mics.n_mics):
        write_wav(out / f"mic_{m}.wav", mics.signals[:, m], sr)
    return 0


def cmd_mix_sir(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output_dir)
    sr = cfg.grid.sample_rate
    cmd = read_mono(args.command, sr)
    interf = read_mono(args.interferer, sr)
    n = max(cmd.size, interf.size)
    cmd = np.pad(cmd, (0, n - cmd.size))
    interf = np.pad(interf, (0, n - interf.size))
    g = mix_at_sir(cmd, interf, args.sir)
    write_wav(out / "command_scaled.wav", g * cmd, sr, dtype=np.float64)
    write_wav(out / "interferer.wav", interf, sr, dtype=np.float64)
    write_wav(out / "mixture.wav", g * cmd + interf, sr, dtype=np.float64)
    print(f"gain {g!r}, SIR {sir_db(g * cmd, interf):.12f} dB")
    return 0


def cmd_dump_config(args) -> int:
    cfg = _load(args)
    text = dump_config(cfg)
    if args.out_dir is not None:
        write_text(Path(cfg.output_dir) / "config.yaml", text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment configuration")
    common.add_argument("--seed", type=int, help="scene / noise seed (overrides the config)")
    common.add_argument("--out-dir", type=Path, help="output directory (overrides the config)")
    common.add_argument("--bypass", action="store_true", help="skip the optimisation")
    common.add_argument("--d", type=float, action="append",
                        help="distortion budget; repeat for a sweep")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="spotformer", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("spotform", parents=[common], help="spotform L mono WAVs")
    sp.add_argument("inputs", nargs="*", help="one WAV per loudspeaker (default: config inputs)")
    sp.set_defaults(func=cmd_spotform)
    sw = sub.add_parser("sweep", parents=[common], help="energy-reduction sweep over d")
    sw.add_argument("--runs", type=int, help="perturbed runs per d (overrides the config)")
    sw.set_defaults(func=cmd_sweep)
    rd = sub.add_parser("render", parents=[common], help="render playback at the VDA mics")
    rd.add_argument("inputs", nargs="*")
    rd.set_defaults(func=cmd_render)
    mx = sub.add_parser("mix-sir", parents=[common], help="mix a command with an interferer")
    mx.add_argument("--command", required=True, type=Path)
    mx.add_argument("--interferer", required=True, type=Path)
    mx.add_argument("--sir", required=True, type=float, help="target SIR in dB")
    mx.set_defaults(func=cmd_mix_sir)
    dc = sub.add_parser("dump-config", parents=[common], help="print the resolved config")
    dc.set_defaults(func=cmd_dump_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
