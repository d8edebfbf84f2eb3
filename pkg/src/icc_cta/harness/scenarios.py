"""Monte Carlo scenarios behind the figures, run as independent seeded work units.

Every scenario splits its trials into work units.  Unit ``i`` draws from
``SeedSequence(seed, spawn_key=(i,))`` and results are merged in unit order,
so the output depends only on the configuration and seed, never on the
number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import repeat
from typing import Any, Callable, List, Optional

import numpy as np

from ..airframe import AttackConfig
from ..channel import FIG_AOA_GRID, AoaModel, sample_mean_aoa
from ..code import IccCode, code_rate, iep_closed_form
from ..decode import SepIepCounts, decode_trial
from ..detect import ThresholdCache, calibrated, null_statistics, single_source_statistics
from ..errors import IccCtaError, NumericalError
from ..estimate import (
    Alg1Config,
    MetricWeights,
    cir_nmse,
    delta_f,
    delta_f_limit,
    lmmse_estimate,
    ls_fs_estimate,
    perfect_mmse_estimate,
    recover_cir,
    rf_inverse_trace,
)
from ..link import CovarianceBank, LinkSetup, trial_rngs
from ..pipeline import EndToEndCounts, calibrate_delta_f_tol, overlap_round, run_round
from ..tradeoff import (
    equally_spaced_positions,
    optimal_code_params,
    s_star,
    stability_bruteforce,
    stability_closed,
    STABILITY_MAX_NB,
)
from .config import ScenarioConfig

LEAD = ("scenario", "trial_id")


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    columns: tuple
    units: Callable[[ScenarioConfig], list]
    work: Callable[[ScenarioConfig, Any, np.random.SeedSequence, Any], Any]
    reduce: Callable[[ScenarioConfig, list, list], List[dict]]
    prepare: Optional[Callable[[ScenarioConfig, Optional[str]], Any]] = None
    analytic: bool = False


class ScenarioFailure(IccCtaError):
    """A unit failed numerically; ``rows`` holds the aggregate of the units that finished."""

    def __init__(self, message: str, rows: List[dict]):
        super().__init__(message)
        self.rows = rows


def _ci(p: float, n: int) -> float:
    """Three-sigma binomial half-width."""
    return 3.0 * math.sqrt(max(p * (1.0 - p), 0.0) / n) if n else math.nan


def _chunks(total: int, size: int) -> list:
    return [(start, min(size, total - start)) for start in range(0, total, size)]


def _row(cfg: ScenarioConfig, trial_id, **values) -> dict:
    out = {"scenario": cfg.scenario, "trial_id": trial_id}
    out.update(values)
    return out


# ---------------------------------------------------------------- erd_roc

def _erd_units(cfg):
    return [(n_t, start, size) for n_t in cfg.n_t_list for start, size in _chunks(cfg.trials, 20000)]


def _erd_work(cfg, unit, seq, ctx):
    n_t, _, size = unit
    rng = np.random.default_rng(seq)
    t1_null, _ = null_statistics(n_t, size, rng)
    t1_sig, _ = single_source_statistics(n_t, cfg.snr_db, size, rng, cfg.delta_rad, cfg.d_spacing)
    return t1_null, t1_sig


def _erd_reduce(cfg, units, parts):
    rows = []
    for n_t in cfg.n_t_list:
        sel = [p for u, p in zip(units, parts) if u[0] == n_t]
        if not sel:
            continue
        null = np.concatenate([p[0] for p in sel])
        sig = np.concatenate([p[1] for p in sel])
        n = null.size
        for g in cfg.gamma_list:
            pf = float(np.mean(null > g))
            pd = float(np.mean(sig > g))
            rows.append(_row(cfg, "all", n_t=n_t, gamma=float(g), p_f=pf, p_f_ci=_ci(pf, n), p_d=pd,
                             p_d_ci=_ci(pd, n), n=n))
        gq = float(np.quantile(null, 1.0 - cfg.target_pf))
        pf = float(np.mean(null > gq))
        pd = float(np.mean(sig > gq))
        rows.append(_row(cfg, "calibrated", n_t=n_t, gamma=gq, p_f=pf, p_f_ci=_ci(pf, n), p_d=pd,
                         p_d_ci=_ci(pd, n), n=n))
    return rows


# ---------------------------------------------------------------- delta_f_grid

def _aoa_grid(cfg) -> np.ndarray:
    if cfg.k_support == len(FIG_AOA_GRID):
        return np.asarray(FIG_AOA_GRID)
    return AoaModel("DPD", cfg.k_support).grid()


def _df_units(cfg):
    k = len(_aoa_grid(cfg))
    return [(a, b) for a in range(k) for b in range(k)]


def _df_work(cfg, unit, seq, ctx):
    grid = _aoa_grid(cfg)
    bank = CovarianceBank(cfg.n_t, cfg.l_taps, cfg.delta_rad, cfg.d_spacing)
    sb, sa = bank(grid[unit[0]]), bank(grid[unit[1]])
    positions = equally_spaced_positions(cfg.n_fft, cfg.l_taps)
    rng = np.random.default_rng(seq)
    nv = 10.0 ** (-cfg.snr_db / 10.0)
    vals = np.empty(cfg.trials)
    for t in range(cfg.trials):
        obs, _ = overlap_round(cfg.n_fft, positions, cfg.l_taps, sb, sa, nv, rng, _attack(cfg))
        pair = lmmse_estimate(obs, sb.cov, nv)
        vals[t] = delta_f(pair, MetricWeights.build(sb.cov, obs.f_ls)).delta_f
    return vals, delta_f_limit(sb.cov, sa.cov, cfg.l_taps)


def _df_reduce(cfg, units, parts):
    grid = _aoa_grid(cfg)
    rows = []
    for (a, b), (vals, lim) in zip(units, parts):
        n = vals.size
        std = float(np.std(vals, ddof=1)) if n > 1 else math.nan
        rows.append(_row(cfg, "all", theta1=float(grid[a]), theta2=float(grid[b]), delta_f_mean=float(np.mean(vals)),
                         delta_f_std=std, delta_f_ci=3.0 * std / math.sqrt(n) if n > 1 else math.nan,
                         delta_f_limit=lim, n=n))
    return rows


def _attack(cfg) -> AttackConfig:
    return AttackConfig(cfg.attack_mode, cfg.attack_power, pip_freq=cfg.attack_pip_freq,
                        pip_time=cfg.attack_pip_time, pattern_law=cfg.attack_pattern)


# ---------------------------------------------------------------- nmse_cdf

def _cdf_units(cfg):
    return [(kind, run) for kind in ("ideal", "random") for run in range(cfg.trials)]


def _random_overlap_positions(cfg, rng) -> np.ndarray:
    code = IccCode(cfg.n_b, cfg.s)
    a = np.asarray(code.random_codeword(rng).bits, dtype=bool)
    b = np.asarray(code.random_codeword(rng).bits, dtype=bool)
    overlap = np.flatnonzero(a & b)
    pick = rng.choice(overlap.size, size=cfg.l_taps, replace=False)
    return np.sort(overlap[pick])


def _cdf_work(cfg, unit, seq, ctx):
    kind, _ = unit
    rng = np.random.default_rng(seq)
    if kind == "ideal":
        positions = np.asarray(equally_spaced_positions(cfg.n_fft, cfg.l_taps))
    else:
        positions = _random_overlap_positions(cfg, rng)
    bank = CovarianceBank(cfg.n_t, cfg.l_taps, cfg.delta_rad, cfg.d_spacing)
    aoa = AoaModel(cfg.aoa_kind, cfg.k_support)
    nv = 10.0 ** (-cfg.snr_db / 10.0)
    total = 0.0
    for _ in range(cfg.channel_draws):
        sb = bank(sample_mean_aoa(aoa, rng))
        sa = bank(sample_mean_aoa(aoa, rng))
        obs, grid = overlap_round(cfg.n_fft, positions, cfg.l_taps, sb, sa, nv, rng, _attack(cfg))
        pair = lmmse_estimate(obs, sb.cov, nv)
        total += cir_nmse(recover_cir(pair.h_b_hat, sb.cov, obs.f_ls), grid.truth["cir_b"].taps)
    return total / cfg.channel_draws, rf_inverse_trace(cfg.n_fft, cfg.l_taps, positions), positions


def _cdf_reduce(cfg, units, parts):
    rows = []
    for (kind, run), (nmse, tr, positions) in zip(units, parts):
        rows.append(_row(cfg, run, kind=kind, nmse=nmse, nmse_db=10.0 * math.log10(nmse), tr_rf_inv=tr,
                         positions=";".join(str(int(p)) for p in positions), channel_draws=cfg.channel_draws))
    return rows


# ---------------------------------------------------------------- nmse_vs_snr

NMSE_CHUNK = 250


def _snrs(cfg) -> tuple:
    return tuple(cfg.snr_list) or (cfg.snr_db,)


def _nvs_units(cfg):
    return [(n_t, si, start, size) for n_t in cfg.n_t_list for si in range(len(_snrs(cfg)))
            for start, size in _chunks(cfg.trials, NMSE_CHUNK)]


def _nvs_work(cfg, unit, seq, ctx):
    """Sums of squared errors; angles and pilots are shared across antenna counts."""
    n_t, si, start, size = unit
    snr = _snrs(cfg)[si]
    nv = 10.0 ** (-snr / 10.0)
    bank = CovarianceBank(n_t, cfg.l_taps, cfg.delta_rad, cfg.d_spacing)
    aoa = AoaModel(cfg.aoa_kind, cfg.k_support)
    positions = equally_spaced_positions(cfg.n_fft, cfg.l_taps)
    acc = np.zeros(6)
    for t in range(start, start + size):
        common = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0xC0, t)))
        local = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0xC1, t, n_t, si)))
        sb = bank(sample_mean_aoa(aoa, common))
        sa = bank(sample_mean_aoa(aoa, common))
        obs, _ = overlap_round(cfg.n_fft, positions, cfg.l_taps, sb, sa, nv, local, _attack(cfg), pilot_rng=common)
        lm = lmmse_estimate(obs, sb.cov, nv)
        pm = perfect_mmse_estimate(obs, sb.cov, nv)
        hb, ha = obs.h_b_true, obs.h_a_true
        acc += [
            np.sum(np.abs(ls_fs_estimate(obs) - hb) ** 2),
            np.sum(np.abs(lm.h_b_hat - hb) ** 2),
            np.sum(np.abs(pm.h_b_hat - hb) ** 2),
            np.sum(np.abs(lm.h_a_hat - ha) ** 2),
            np.sum(np.abs(hb) ** 2),
            np.sum(np.abs(ha) ** 2),
        ]
    return acc, size


def _nvs_reduce(cfg, units, parts):
    rows = []
    keys = sorted({(u[0], u[1]) for u in units}, key=lambda k: (cfg.n_t_list.index(k[0]), k[1]))
    for n_t, si in keys:
        acc = sum(p[0] for u, p in zip(units, parts) if (u[0], u[1]) == (n_t, si))
        n = sum(p[1] for u, p in zip(units, parts) if (u[0], u[1]) == (n_t, si))
        for name, err, energy in (("ls", acc[0], acc[4]), ("lmmse", acc[1], acc[4]),
                                  ("perfect_mmse", acc[2], acc[4]), ("lmmse_attacker", acc[3], acc[5])):
            nmse = float(err / energy)
            rows.append(_row(cfg, "all", n_t=n_t, snr_db=float(_snrs(cfg)[si]), estimator=name, nmse=nmse,
                             nmse_db=10.0 * math.log10(nmse), n=n))
    return rows


# ---------------------------------------------------------------- tradeoff_curve

def _single_unit(cfg):
    return [0]


def _tc_work(cfg, unit, seq, ctx):
    rows = []
    for n_fft in cfg.fft_list:
        ss = s_star(n_fft, cfg.l_taps)
        n_b = ss
        for w in range(n_b, n_b // 2, -1):
            if 2 * w - n_b < 1:
                continue
            s = 2 * w - n_b
            p_s = stability_closed(n_b, w, ss)
            brute = stability_bruteforce(IccCode(n_b, s), n_fft, cfg.l_taps) if n_b <= STABILITY_MAX_NB else None
            p_i = iep_closed_form(n_b, s)
            rows.append(dict(n_fft=n_fft, l_taps=cfg.l_taps, n_b=n_b, s_star=ss, w=w, s=s, rate=code_rate(n_b, s),
                             p_s=p_s, p_s_bruteforce=brute, p_i=p_i, p_i_over_k=p_i / cfg.k_support,
                             p_i_x100=100.0 * p_i, p_s_root4=p_s ** 0.25,
                             s_t=math.inf if p_s == 0 else 1.0 / p_s))
    return rows


def _passthrough_reduce(cfg, units, parts):
    return [_row(cfg, "all", **r) for part in parts for r in part]


# ---------------------------------------------------------------- iep_surface

def _iep_units(cfg):
    return [(ss, k) for ss in cfg.s_star_list for k in cfg.k_list]


def _iep_work(cfg, unit, seq, ctx):
    ss, k = unit
    n_b = (ss + 1) * k - 1
    w, s, rate = optimal_code_params(ss, n_b)
    p_i = iep_closed_form(n_b, s)
    rng = np.random.default_rng(seq)
    code = IccCode(n_b, s)
    errors = 0
    for start, size in _chunks(cfg.trials, 8192):
        bob = np.array([code.random_codeword(rng).bits for _ in range(size)], dtype=np.int8)
        att = rng.integers(0, 2, size=(size, n_b), dtype=np.int8)
        confusing = (att.sum(axis=1) == w) & np.any(att != bob, axis=1)
        collision = rng.integers(cfg.k_support, size=size) == 0
        wrong_flip = rng.integers(2, size=size) == 1
        errors += int(np.sum(confusing & collision & wrong_flip))
    return dict(n_b=n_b, s_star=ss, k=k, w=w, s=s, rate=rate, p_i_closed=p_i, p_i_over_k=p_i / cfg.k_support,
                p_i_empirical=errors / cfg.trials, p_i_empirical_ci=_ci(p_i / cfg.k_support, cfg.trials),
                n=cfg.trials)


def _list_reduce(cfg, units, parts):
    return [_row(cfg, "all", **p) for p in parts]


# ---------------------------------------------------------------- rate_curve

def _rate_work(cfg, unit, seq, ctx):
    rows = []
    for k in cfg.k_list:
        n_b = 2 * k + 1
        rows.append(dict(curve="s=1", s_star=None, k=k, n_b=n_b, w=k + 1, s=1, rate=code_rate(n_b, 1)))
    for ss in cfg.s_star_list:
        for k in cfg.k_list:
            n_b = (ss + 1) * k - 1
            w, s, rate = optimal_code_params(ss, n_b)
            rows.append(dict(curve=f"s*={ss}", s_star=ss, k=k, n_b=n_b, w=w, s=s, rate=rate))
    return rows


# ---------------------------------------------------------------- identification

ID_CHUNK = 500


def _id_setup(cfg, ctx) -> LinkSetup:
    attack = _attack(cfg)
    code = IccCode(cfg.n_b, cfg.s)
    return LinkSetup(code, cfg.n_t, cfg.n_fft, cfg.l_taps, cfg.delta_rad, cfg.d_spacing, cfg.snr_db,
                     aoa=AoaModel(cfg.aoa_kind, cfg.k_support), attack=attack,
                     thresholds=ctx["thresholds"], r_threshold=cfg.r_threshold)


def _id_prepare(cfg, out_dir):
    cache = ThresholdCache(f"{out_dir}/erd_thresholds.json") if out_dir else None
    thr = calibrated(cfg.n_t, cfg.target_pf, cfg.snr_db, cfg.seed, cache=cache)
    ctx = {"thresholds": thr, "delta_f_tol": 0.0}
    if cfg.end_to_end:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0xDF,)))
        ctx["delta_f_tol"] = calibrate_delta_f_tol(_id_setup(cfg, ctx), 200, rng)
    return ctx


def _id_units(cfg):
    return _chunks(cfg.trials, ID_CHUNK)


def _id_work(cfg, unit, seq, ctx):
    setup = _id_setup(cfg, ctx)
    rngs = trial_rngs(np.random.default_rng(seq), unit[1])
    if cfg.end_to_end:
        alg = Alg1Config(cfg.l_taps, ctx["delta_f_tol"])
        counts = EndToEndCounts()
        for r in rngs:
            counts.add(run_round(setup, alg, r))
        return counts
    total = SepIepCounts(0, 0, 0, 0, 0)
    for r in rngs:
        total = total + decode_trial(setup, r)
    return total


def _id_reduce(cfg, units, parts):
    p_i = iep_closed_form(cfg.n_b, cfg.s)
    if cfg.end_to_end:
        n = sum(p.n_trials for p in parts)
        err = sum(p.errors for p in parts)
        target = p_i / cfg.k_support if cfg.aoa_kind == "DPD" else 0.0
        rate = err / n if n else math.nan
        return [_row(cfg, "all", n=n, metric="end_to_end_error", value=rate, ci=_ci(target, n), reference=target,
                     confusing=sum(p.confusing for p in parts))]
    total = sum(parts[1:], parts[0])
    return [
        _row(cfg, "all", n=total.n_trials, metric="sep_rate", value=total.sep_rate, ci=_ci(total.sep_rate, total.n_trials),
             reference=0.0, confusing=total.coin_flips),
        _row(cfg, "all", n=total.n_trials, metric="iep_rate", value=total.iep_rate, ci=_ci(p_i, total.n_trials),
             reference=p_i, confusing=total.coin_flips),
    ]


REGISTRY = {
    "erd_roc": Scenario(
        "erd_roc", "false-alarm and detection rates of the presence ratio versus threshold and antenna count",
        LEAD + ("n_t", "gamma", "p_f", "p_f_ci", "p_d", "p_d_ci", "n"),
        _erd_units, _erd_work, _erd_reduce),
    "delta_f_grid": Scenario(
        "delta_f_grid", "mean angular decision gap over a grid of mean AoA pairs",
        LEAD + ("theta1", "theta2", "delta_f_mean", "delta_f_std", "delta_f_ci", "delta_f_limit", "n"),
        _df_units, _df_work, _df_reduce),
    "nmse_cdf": Scenario(
        "nmse_cdf", "CIR NMSE per run for equally spaced versus random overlap sets",
        LEAD + ("kind", "nmse", "nmse_db", "tr_rf_inv", "positions", "channel_draws"),
        _cdf_units, _cdf_work, _cdf_reduce),
    "tradeoff_curve": Scenario(
        "tradeoff_curve", "stability probability versus IEP along n_b = s*",
        LEAD + ("n_fft", "l_taps", "n_b", "s_star", "w", "s", "rate", "p_s", "p_s_bruteforce", "p_i", "p_i_over_k",
                "p_i_x100", "p_s_root4", "s_t"),
        _single_unit, _tc_work, _passthrough_reduce, analytic=True),
    "iep_surface": Scenario(
        "iep_surface", "IEP of optimally stable codes, closed form and code-level Monte Carlo",
        LEAD + ("n_b", "s_star", "k", "w", "s", "rate", "p_i_closed", "p_i_over_k", "p_i_empirical",
                "p_i_empirical_ci", "n"),
        _iep_units, _iep_work, _list_reduce, analytic=True),
    "rate_curve": Scenario(
        "rate_curve", "code rate of optimally stable codes against the s = 1 reference",
        LEAD + ("curve", "s_star", "k", "n_b", "w", "s", "rate"),
        _single_unit, _rate_work, _passthrough_reduce, analytic=True),
    "nmse_vs_snr": Scenario(
        "nmse_vs_snr", "FS-channel NMSE of LS, LMMSE and perfect MMSE versus antenna count under PTS",
        LEAD + ("n_t", "snr_db", "estimator", "nmse", "nmse_db", "n"),
        _nvs_units, _nvs_work, _nvs_reduce),
    "identification": Scenario(
        "identification", "separation and identification error rates of the full receiver",
        LEAD + ("metric", "value", "ci", "reference", "confusing", "n"),
        _id_units, _id_work, _id_reduce, prepare=_id_prepare),
}


def _run_unit(name: str, cfg: ScenarioConfig, unit, seq, ctx):
    return REGISTRY[name].work(cfg, unit, seq, ctx)


def run_scenario(cfg: ScenarioConfig, out_dir: Optional[str] = None) -> List[dict]:
    """Run all work units and return the merged records (header-only output when ``trials == 0``)."""
    sc = REGISTRY[cfg.scenario]
    if cfg.trials == 0:
        return []
    ctx = sc.prepare(cfg, out_dir) if sc.prepare else None
    units = sc.units(cfg)
    seqs = [np.random.SeedSequence(cfg.seed, spawn_key=(i,)) for i in range(len(units))]
    parts: list = []
    try:
        if cfg.workers > 1 and len(units) > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                for part in pool.map(_run_unit, repeat(sc.name), repeat(cfg), units, seqs, repeat(ctx)):
                    parts.append(part)
        else:
            for unit, seq in zip(units, seqs):
                parts.append(sc.work(cfg, unit, seq, ctx))
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        done = units[: len(parts)]
        rows = sc.reduce(cfg, done, parts) if parts else []
        raise ScenarioFailure(f"{cfg.scenario}: unit {len(parts)} failed: {exc}", rows) from exc
    return sc.reduce(cfg, units, parts)
