"""Monte Carlo sweeps: RMSE of both estimators against the analytic bounds."""

from __future__ import annotations

import csv
import io
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .crb import CrbInputs, crb_frequency, crb_ny_phase, crb_sub_phase
from .frontend import SamplingPattern, modulation_matrix, observe
from .signal_model import ArrayGeometry, Source, SourceEnsemble, coset_index, synthesize_nyquist
from .subspace import jdfsd
from .trilinear import RalsOptions, jdftd

CSV_HEADER = ("sweep", "algorithm", "rmse_phase_rad", "rmse_freq_hz", "rmse_doa_deg",
              "crb_sub_phase", "crb_ny_phase", "crb_sub_freq", "crb_ny_freq", "trials", "failures")
SWEEPS = ("snr", "branches", "sources")
ALGORITHMS = ("jdfsd", "jdftd")
DEFAULT_SNR_GRID = tuple(float(v) for v in range(-10, 31, 5))
TRIPLET_CELLS_DEG = ((-12.5, -7.5), (-2.5, 2.5), (7.5, 12.5))
FREQ_RANGE = (0.05, 0.95)  # fraction of f_N


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: str = "ula"
    sensors: int = 8
    nyquist_hz: float = 10e9
    reduction: int = 8  # L
    branches: int = 8  # P
    pattern: str = "first"
    snapshots: int = 1024  # T, Nyquist samples
    sources: int = 3
    snr_db: tuple[float, ...] | None = None
    sweep: str = "snr"
    sweep_values: tuple | None = None
    trials: int = 200
    seed: int = 0
    algorithm: str = "both"
    refine: bool = True
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.sweep not in SWEEPS:
            raise ValueError(f"sweep must be one of {SWEEPS}")
        if self.snr_db is None:
            snr = DEFAULT_SNR_GRID if self.sweep == "snr" else (20.0,)
        else:
            snr = tuple(float(v) for v in np.atleast_1d(self.snr_db))
        object.__setattr__(self, "snr_db", snr)
        if self.sweep != "snr" and len(snr) != 1:
            raise ValueError(f"a {self.sweep} sweep runs at one SNR, got {snr}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.snapshots % self.reduction:
            raise ValueError("snapshots must be divisible by the reduction factor")
        if not 1 <= self.branches <= self.reduction:
            raise ValueError("need 1 <= branches <= reduction")
        if self.algorithm not in ALGORITHMS + ("both",):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.sweep_values is not None:
            object.__setattr__(self, "sweep_values", tuple(self.sweep_values))

    @property
    def algorithms(self) -> tuple[str, ...]:
        return ALGORITHMS if self.algorithm == "both" else (self.algorithm,)

    def values(self) -> tuple:
        if self.sweep_values is not None:
            return self.sweep_values
        if self.sweep == "snr":
            return self.snr_db
        if self.sweep == "branches":
            return tuple(range(2, self.reduction + 1, 2))
        return tuple(range(1, 6))

    def geometry_obj(self) -> ArrayGeometry:
        return ArrayGeometry.parse(self.geometry, self.sensors)

    @classmethod
    def from_mapping(cls, kv: dict) -> "ExperimentConfig":
        """Build from string values (config file or CLI), ignoring None entries."""
        known = {f.name: f for f in fields(cls)}
        out = {}
        for raw_key, raw in kv.items():
            if raw is None:
                continue
            key = raw_key.replace("-", "_")
            if key not in known:
                raise ValueError(f"unknown config key {raw_key!r}")
            out[key] = _coerce(key, raw)
        return cls(**out)


def _coerce(key, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if key in ("snr_db", "sweep_values"):
        return tuple(float(v) if key == "snr_db" else _num(v) for v in raw.split(",") if v.strip())
    if key in ("sensors", "reduction", "branches", "snapshots", "sources", "trials", "seed", "workers"):
        return int(raw)
    if key == "nyquist_hz":
        return float(raw)
    if key == "refine":
        if raw.lower() not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise ValueError(f"not a boolean: {raw!r}")
        return raw.lower() in ("1", "true", "yes", "on")
    if key == "out" and raw == "":
        return None
    return raw


def _num(v):
    f = float(v)
    return int(f) if f.is_integer() and "." not in v else f


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    kv = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            kv[k.strip()] = v.strip()
    return kv


@dataclass
class SweepRow:
    sweep: object
    algorithm: str
    rmse_phase_rad: float
    rmse_freq_hz: float
    rmse_doa_deg: float
    crb_sub_phase: float
    crb_ny_phase: float
    crb_sub_freq: float
    crb_ny_freq: float
    trials: int
    failures: int


@dataclass
class SweepResult:
    config: ExperimentConfig
    rows: list[SweepRow] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, k)) for k in CSV_HEADER])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def row(self, sweep, algorithm) -> SweepRow:
        for r in self.rows:
            if r.sweep == sweep and r.algorithm == algorithm:
                return r
        raise KeyError((sweep, algorithm))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rmse(estimates, truths) -> float:
    """``sqrt(mean((est - truth)^2))`` over all trials and sources."""
    e = np.asarray(estimates, dtype=float)
    t = np.asarray(truths, dtype=float)
    if e.shape != t.shape:
        raise ValueError(f"shape mismatch {e.shape} vs {t.shape}")
    if e.size == 0:
        return float("nan")
    return float(np.sqrt(np.mean((e - t) ** 2)))


def pair_by_frequency(f_est, f_true) -> np.ndarray:
    """Index into ``f_est`` matched to each true source (min total |f_est - f|)."""
    cost = np.abs(np.subtract.outer(np.asarray(f_true), np.asarray(f_est)))
    rows, cols = linear_sum_assignment(cost)
    out = np.empty(len(f_true), dtype=int)
    out[rows] = cols
    return out


def draw_sources(rng, K: int, f_N: float, L: int, triplet: bool) -> SourceEnsemble:
    """DOAs from the experiment cells and frequencies in [0.05, 0.95] f_N on distinct sub-bands.

    ``triplet`` uses the three fixed cells around -10, 0 and +10 degrees (K=3).
    Otherwise five cells ``10 j +- 2.5`` degrees are shuffled and the first K kept,
    so ensembles for different K are nested.
    """
    if triplet:
        if K != 3:
            raise ValueError("the triplet layout needs K=3")
        cells = TRIPLET_CELLS_DEG
    else:
        if not 1 <= K <= 5:
            raise ValueError("the cell layout supports 1 <= K <= 5")
        cells = [(10 * j - 2.5, 10 * j + 2.5) for j in rng.permutation(np.arange(-2, 3))]
    n = len(cells)
    thetas = np.deg2rad([rng.uniform(lo, hi) for lo, hi in cells])
    while True:
        f = rng.uniform(*FREQ_RANGE, n) * f_N
        if len({coset_index(v, f_N, L) for v in f}) == n:
            break
    return SourceEnsemble(tuple(Source(thetas[k], f[k]) for k in range(K)), f_N, L)


def _trial(args):
    cfg, idx, value, trial = args
    K = value if cfg.sweep == "sources" else cfg.sources
    P = value if cfg.sweep == "branches" else cfg.branches
    snr = value if cfg.sweep == "snr" else cfg.snr_db[0]
    L, f_N, T = cfg.reduction, cfg.nyquist_hz, cfg.snapshots
    geom = cfg.geometry_obj()

    src_rng = np.random.default_rng([cfg.seed, trial])
    ens = draw_sources(src_rng, K, f_N, L, triplet=(cfg.sweep != "sources" and K == 3))
    assert len(set(ens.omega)) == ens.K and np.all((ens.freqs > 0) & (ens.freqs < f_N))

    rng = np.random.default_rng([cfg.seed, idx, trial])
    pat = SamplingPattern.parse(cfg.pattern, L, P, rng)
    rec = synthesize_nyquist(ens, geom, T, snr, rng)
    snaps = observe(rec, pat)
    B = modulation_matrix(pat)

    inp = CrbInputs(geom, ens.phis(geom.d), ens.omega, pat, rec.sigma2, T)
    crbs = (float(np.mean(np.diag(crb_sub_phase(inp)))), float(np.mean(np.diag(crb_ny_phase(inp)))),
            float(np.mean(crb_frequency(inp, "sub", f_N))), float(np.mean(crb_frequency(inp, "nyquist", f_N))))

    truth = (ens.phis(geom.d), ens.freqs, np.rad2deg(ens.thetas))
    out = {}
    for alg in cfg.algorithms:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                if alg == "jdfsd":
                    res = jdfsd(snaps, B, geom, K, refine=cfg.refine)
                else:
                    res = jdftd(snaps, B, geom, K, RalsOptions(seed=trial), refine=cfg.refine)
            if alg == "jdftd" and not res.flags["converged"]:
                raise RuntimeError("ALS did not converge")
        except (RuntimeError, ValueError, np.linalg.LinAlgError):
            out[alg] = None
            continue
        perm = pair_by_frequency(res.freqs, truth[1])
        dphi = np.angle(np.exp(1j * (res.phis[perm] - truth[0])))
        out[alg] = (dphi, res.freqs[perm] - truth[1], np.rad2deg(res.thetas[perm]) - truth[2])
    return crbs, out


def run_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Run every trial of every sweep value; rows come out in sweep then algorithm order."""
    result = SweepResult(cfg)
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for idx, value in enumerate(cfg.values()):
            jobs = [(cfg, idx, value, t) for t in range(cfg.trials)]
            outs = list(pool.map(_trial, jobs)) if pool else [_trial(j) for j in jobs]
            crb = np.mean([o[0] for o in outs], axis=0)
            for alg in cfg.algorithms:
                good = [o[1][alg] for o in outs if o[1][alg] is not None]
                errs = [np.concatenate([g[i] for g in good]) if good else np.zeros(0) for i in range(3)]
                result.rows.append(SweepRow(
                    value, alg,
                    *(rmse(e, np.zeros_like(e)) for e in errs),
                    *(float(c) for c in crb),
                    cfg.trials, cfg.trials - len(good)))
    finally:
        if pool:
            pool.shutdown()
    if cfg.out:
        result.write_csv(cfg.out)
    return result


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)
