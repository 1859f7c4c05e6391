"""Command line entry point: ``simulate``, ``crb`` and ``sweep``."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .crb import CrbInputs, crb_frequency, crb_ny_phase, crb_sub_phase, single_source_floor
from .frontend import SamplingPattern, modulation_matrix, observe
from .harness import ExperimentConfig, draw_sources, read_config_file, run_sweep
from .signal_model import synthesize_nyquist
from .subspace import jdfsd
from .trilinear import RalsOptions, jdftd

FLAGS = ("geometry", "sensors", "nyquist-hz", "reduction", "branches", "pattern", "snapshots",
         "sources", "snr-db", "trials", "seed", "algorithm", "out", "sweep", "sweep-values",
         "refine", "workers")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; flags given here override it")
    for flag in FLAGS:
        common.add_argument(f"--{flag}", default=None)
    p = argparse.ArgumentParser(prog="subnyq", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="one scenario, estimates vs truth")
    sub.add_parser("crb", parents=[common], help="bound table for one drawn scenario")
    sub.add_parser("sweep", parents=[common], help="Monte Carlo sweep written as CSV")
    return p


def _config(args) -> ExperimentConfig:
    kv = read_config_file(args.config) if args.config else {}
    for flag in FLAGS:
        v = getattr(args, flag.replace("-", "_"))
        if v is not None:
            kv[flag] = v
    return ExperimentConfig.from_mapping(kv)


def _scenario(cfg):
    rng = np.random.default_rng([cfg.seed, 0])
    ens = draw_sources(rng, cfg.sources, cfg.nyquist_hz, cfg.reduction, triplet=cfg.sources == 3)
    pat = SamplingPattern.parse(cfg.pattern, cfg.reduction, cfg.branches, rng)
    return ens, pat, rng


def _simulate(cfg) -> int:
    geom = cfg.geometry_obj()
    ens, pat, rng = _scenario(cfg)
    snr = cfg.snr_db[-1]
    snaps = observe(synthesize_nyquist(ens, geom, cfg.snapshots, snr, rng), pat)
    B = modulation_matrix(pat)
    print(f"pattern {list(pat.cosets)}  L={pat.L} P={pat.P}  SNR={snr:g} dB  T={cfg.snapshots}")
    order = np.argsort(ens.freqs)
    print("truth   " + "  ".join(f"(theta={np.rad2deg(ens.thetas[k]):8.4f} deg, f={ens.freqs[k] / 1e9:.6f} GHz)"
                                 for k in order))
    for alg in cfg.algorithms:
        if alg == "jdfsd":
            res = jdfsd(snaps, B, geom, ens.K, refine=cfg.refine)
        else:
            res = jdftd(snaps, B, geom, ens.K, RalsOptions(seed=cfg.seed), refine=cfg.refine)
        print(f"{alg:7s} " + "  ".join(f"(theta={np.rad2deg(s.theta):8.4f} deg, f={s.f / 1e9:.6f} GHz)"
                                       for s in res.sources))
    return 0


def _crb(cfg) -> int:
    geom = cfg.geometry_obj()
    ens, pat, _ = _scenario(cfg)
    print("snr_db,crb_sub_phase,crb_ny_phase,floor,crb_sub_freq,crb_ny_freq")
    for snr in cfg.snr_db:
        s2 = 10 ** (-snr / 10)
        inp = CrbInputs(geom, ens.phis(geom.d), ens.omega, pat, s2, cfg.snapshots)
        vals = (np.mean(np.diag(crb_sub_phase(inp))), np.mean(np.diag(crb_ny_phase(inp))),
                single_source_floor(1 / s2, cfg.snapshots, geom.M),
                np.mean(crb_frequency(inp, "sub", cfg.nyquist_hz)),
                np.mean(crb_frequency(inp, "nyquist", cfg.nyquist_hz)))
        print(",".join([repr(float(snr))] + [f"{v:.6e}" for v in vals]))
    return 0


def _sweep(cfg) -> int:
    res = run_sweep(cfg)
    if not cfg.out:
        sys.stdout.write(res.to_csv())
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _config(args)
    except (ValueError, OSError) as exc:
        print(f"subnyq: {exc}", file=sys.stderr)
        return 2
    return {"simulate": _simulate, "crb": _crb, "sweep": _sweep}[args.command](cfg)


if __name__ == "__main__":
    raise SystemExit(main())
