"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numeric failure (a
``failure_dump.json`` is written to the output directory).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .channel import NORMALIZE_MODES
from .config import (MANIFEST_KIND, ExperimentConfig, apply_paper_scale, load_config)
from .errors import ConfigError, ContractError, NumericFailure
from .experiments import (ber_sweep, constellation, draw_channel, learn, papr_ccdf,
                          rms_key, waveform_report)
from .metrics import frequency_concentration, time_concentration, write_ber_csv
from .transceiver import idft_matrix

log = logging.getLogger("flexwave")

REPORT_COLUMNS = 8


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_rows(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)
    return path


def write_matrix_csv(path: Path, Q: np.ndarray) -> Path:
    """Long format ``row, col, re, im``."""
    rows = ([i, k, _fmt(Q[i, k].real), _fmt(Q[i, k].imag)]
            for i in range(Q.shape[0]) for k in range(Q.shape[1]))
    return _write_rows(path, ["row", "col", "re", "im"], rows)


def read_matrix_csv(path: Path) -> np.ndarray:
    data = np.genfromtxt(path, delimiter=",", names=True)
    n = int(data["row"].max()) + 1
    Q = np.zeros((n, int(data["col"].max()) + 1), dtype=np.complex128)
    Q[data["row"].astype(int), data["col"].astype(int)] = data["re"] + 1j * data["im"]
    return Q


def write_vector_csv(path: Path, v: np.ndarray, index: str = "n") -> Path:
    rows = ([i, _fmt(z.real), _fmt(z.imag)] for i, z in enumerate(v))
    return _write_rows(path, [index, "re", "im"], rows)


def write_columns_csv(path: Path, A: np.ndarray, index: str) -> Path:
    """One row per sample/bin, ``col<k>_re, col<k>_im`` pairs across."""
    header = [index] + [f"col{k}_{part}" for k in range(A.shape[1]) for part in ("re", "im")]
    rows = ([i] + [_fmt(p) for z in A[i] for p in (z.real, z.imag)] for i in range(A.shape[0]))
    return _write_rows(path, header, rows)


def write_manifest(out: Path, cfg: ExperimentConfig, command: str, outputs: list[Path],
                   config_path: str | None) -> Path:
    inputs = {}
    if config_path:
        inputs["config_sha256"] = sha256_file(Path(config_path))
    profile = Path(cfg.channel.profile)
    if profile.is_file():
        inputs["profile_sha256"] = sha256_file(profile)
    manifest = {
        "kind": MANIFEST_KIND,
        "version": __version__,
        "command": command,
        "seed": cfg.run.seed,
        "config": cfg.to_dict(),
        "inputs": inputs,
        "outputs": {p.name: sha256_file(p) for p in sorted(outputs)},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------- commands


def cmd_optimize(cfg: ExperimentConfig, out: Path) -> list[Path]:
    rms_ns = cfg.channel.rms_ds_ns[0]
    key = rms_key(rms_ns)
    h = draw_channel(cfg, rms_ns, key)
    res = learn(cfg, h, key)
    trace_cols = ["step", "stage", "R", "P", "Theta", "total", "eps_db",
                  "sigma_R", "sigma_P", "sigma_T", "power"]
    trace_rows = ([getattr(b, k) if k in ("step", "stage") else _fmt(getattr(b, k))
                   for k in trace_cols] for b in res.trace)
    log.info("rms_ds=%g ns: eps=%.3f dB, final R=%.4g", rms_ns, res.eps_db, res.trace[-1].R)
    return [
        write_matrix_csv(out / "qmat.csv", res.Q),
        write_vector_csv(out / "qtaps.csv", res.q),
        write_vector_csv(out / "channel.csv", h.taps, index="tap"),
        _write_rows(out / "train_trace.csv", trace_cols, trace_rows),
    ]


def cmd_papr_ccdf(cfg: ExperimentConfig, out: Path) -> list[Path]:
    paths = []
    for item in papr_ccdf(cfg):
        for scheme, curve in item.curves.items():
            path = out / f"ccdf_{scheme}_{item.rms_ns:g}ns.csv"
            curve.to_csv(path)
            paths.append(path)
        log.info("rms_ds=%g ns PAPR at 1e-1: %s", item.rms_ns,
                 ", ".join(f"{s} {v:.2f} dB" for s, v in item.quantiles_db.items()))
    return paths


def cmd_ber_sweep(cfg: ExperimentConfig, out: Path) -> list[Path]:
    totals, items = ber_sweep(cfg)
    paths = []
    for scheme, stats in totals.items():
        path = out / f"ber_{scheme}.csv"
        write_ber_csv(path, [(e, s, len(items)) for e, s in zip(cfg.noise.ebn0_db, stats)])
        paths.append(path)
    return paths


def cmd_waveform_report(cfg: ExperimentConfig, out: Path) -> list[Path]:
    paths, summary = [], []
    for item in waveform_report(cfg):
        cols = item.Q[:, :REPORT_COLUMNS]
        tag = f"{item.rms_ns:g}ns"
        paths.append(write_columns_csv(out / f"waveform_{tag}_time.csv", cols, "sample"))
        freq = np.fft.fft(cols, axis=0) / np.sqrt(cols.shape[0])
        paths.append(write_columns_csv(out / f"waveform_{tag}_freq.csv", freq, "bin"))
        summary.append([f"{item.rms_ns:g}", _fmt(item.time_conc), _fmt(item.freq_conc),
                        _fmt(item.eps_db)])
    paths.append(_write_rows(out / "waveform_report.csv",
                             ["rms_ds_ns", "time_concentration", "freq_concentration",
                              "eps_db"], summary))
    return paths


def cmd_constellation_dump(cfg: ExperimentConfig, out: Path) -> list[Path]:
    c = constellation(cfg)
    rows = ([i, "".join(str(b) for b in c.labels[i]), _fmt(p.real), _fmt(p.imag)]
            for i, p in enumerate(c.points))
    return [_write_rows(out / "constellation.csv", ["index", "bits", "re", "im"], rows)]


def cmd_waveform_dump(cfg: ExperimentConfig, out: Path, qmat: str | None) -> list[Path]:
    Q = read_matrix_csv(Path(qmat)) if qmat else idft_matrix(cfg.frame.N)
    freq = np.fft.fft(Q, axis=0) / np.sqrt(Q.shape[0])
    stats = [[_fmt(time_concentration(Q)), _fmt(frequency_concentration(Q))]]
    return [
        write_columns_csv(out / "waveform_time.csv", Q, "sample"),
        write_columns_csv(out / "waveform_freq.csv", freq, "bin"),
        _write_rows(out / "waveform_concentration.csv",
                    ["time_concentration", "freq_concentration"], stats),
    ]


COMMANDS = {
    "optimize": cmd_optimize,
    "papr-ccdf": cmd_papr_ccdf,
    "ber-sweep": cmd_ber_sweep,
    "waveform-report": cmd_waveform_report,
    "constellation-dump": cmd_constellation_dump,
    "waveform-dump": cmd_waveform_dump,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config (a run manifest also works)")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out-dir")
    common.add_argument("--paper-scale", action="store_true",
                        help="use full-size batches, channel counts and CCDF block counts")
    common.add_argument("--profile", help="built-in profile name or delay/power CSV")
    common.add_argument("--rms-ds-ns", type=float, nargs="+", metavar="NS")
    common.add_argument("--ebn0-db", type=float, nargs="+", metavar="DB")
    common.add_argument("--normalize-channel", choices=NORMALIZE_MODES)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="flexwave", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "waveform-dump":
            p.add_argument("--qmat", help="qmat.csv from 'optimize' (default: IDFT basis)")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.paper_scale:
        cfg = apply_paper_scale(cfg)
    overrides = {
        "run__seed": args.seed,
        "run__workers": args.workers,
        "run__out_dir": args.out_dir,
        "channel__profile": args.profile,
        "channel__rms_ds_ns": args.rms_ds_ns,
        "noise__ebn0_db": args.ebn0_db,
        "channel__normalize": args.normalize_channel,
    }
    return cfg.replace(**{k: v for k, v in overrides.items() if v is not None})


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if args.command == "waveform-dump":
            outputs = cmd_waveform_dump(cfg, out, args.qmat)
        else:
            outputs = COMMANDS[args.command](cfg, out)
    except (ConfigError, ContractError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericFailure as exc:
        dump = out / "failure_dump.json"
        dump.write_text(json.dumps({"error": str(exc), **exc.dump}, indent=2, default=str))
        print(f"numeric failure: {exc} (details in {dump})", file=sys.stderr)
        return 3
    write_manifest(out, cfg, args.command, outputs, args.config)
    return 0


if __name__ == "__main__":
    sys.exit(main())
