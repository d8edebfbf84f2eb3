"""End-to-end rounds: decode followed by angular authentication on the same grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .airframe import AttackConfig, PilotConfig, Sap, attacker_pilots, pilot_values, synthesize_rx_grid
from .channel import CirRealization, draw_cir
from .decode import OutcomeKind, decode_grid, ensure_thresholds
from .estimate import Alg1Config, Alg1Result, MetricWeights, Status, algorithm1, delta_f, lmmse_estimate, observe_overlap
from .errors import SingularPilotError
from .link import LinkSetup, Trial, simulate_trial, trial_rngs


@dataclass
class RoundResult:
    status: Status
    identified_wrong: bool
    confusing: bool
    collision: bool
    delta_f: Optional[float] = None


def _models(setup: LinkSetup, trial: Trial) -> dict:
    code = setup.code

    def pilot_for(bits):
        return setup.pilot_for(code.unrank(code.rank(bits)))

    return {"r1": trial.stats_b.cov, "pilot_for": pilot_for}


def run_round(setup: LinkSetup, cfg: Alg1Config, rng: np.random.Generator) -> RoundResult:
    trial = simulate_trial(setup, rng)
    decoded = decode_grid(trial.grid, setup.code, setup.thresholds, rng, setup.r_threshold)
    res: Alg1Result = algorithm1(trial.grid, decoded, setup.code, _models(setup, trial), cfg, rng)
    wrong = res.chosen is None or tuple(res.chosen) != tuple(trial.bob.bits)
    return RoundResult(
        res.status,
        wrong,
        decoded.outcome.kind == OutcomeKind.COIN_FLIP,
        trial.theta_a == trial.theta_b,
        None if res.decision is None else res.decision.delta_f,
    )


@dataclass
class EndToEndCounts:
    n_trials: int = 0
    errors: int = 0
    confusing: int = 0
    collisions_confusing: int = 0
    status: dict = field(default_factory=dict)

    def add(self, r: RoundResult) -> None:
        self.n_trials += 1
        self.errors += int(r.identified_wrong)
        self.confusing += int(r.confusing)
        self.collisions_confusing += int(r.confusing and r.collision)
        self.status[r.status.value] = self.status.get(r.status.value, 0) + 1

    @property
    def error_rate(self) -> float:
        return self.errors / self.n_trials if self.n_trials else 0.0


def calibrate_delta_f_tol(setup: LinkSetup, n_trials: int, rng: np.random.Generator,
                          fraction: float = 0.1, symbols: tuple = (0, 1)) -> float:
    """``fraction`` times the median ``|delta f|`` over rounds with distinct mean AoAs.

    Every calibration round forces a full-overlap confusing attack so the
    estimate does not depend on how often confusion happens.
    """
    vals = []
    code = setup.code
    for r in trial_rngs(rng, n_trials):
        trial = simulate_trial(setup, r)
        if trial.theta_a == trial.theta_b:
            continue
        overlap = [j for j in range(code.n_b) if trial.grid.truth["sap_b"][j] and trial.grid.truth["sap_a"][j]]
        if not overlap:
            continue
        x_a = np.asarray(trial.grid.truth["x_a"])[overlap[0]][list(symbols)]
        x_b = trial.x_b[list(symbols)]
        obs = observe_overlap(trial.grid, overlap, np.column_stack([x_b, x_a]), setup.l_taps, symbols)
        try:
            pair = lmmse_estimate(obs, trial.stats_b.cov, trial.grid.noise_var)
        except SingularPilotError:
            continue
        vals.append(abs(delta_f(pair, MetricWeights.build(trial.stats_b.cov, obs.f_ls)).delta_f))
    if not vals:
        return 0.0
    return float(fraction * np.median(vals))


def measure_end_to_end(setup: LinkSetup, cfg: Alg1Config, n_trials: int, rng: np.random.Generator) -> EndToEndCounts:
    ensure_thresholds(setup)
    counts = EndToEndCounts()
    for r in trial_rngs(rng, n_trials):
        counts.add(run_round(setup, cfg, r))
    return counts


def overlap_round(
    n_fft: int,
    positions,
    l_taps: int,
    stats_b,
    stats_a,
    noise_var: float,
    rng: np.random.Generator,
    attack=None,
    phi_bar: float = np.pi / 4,
    c_phases: int = 16,
    pilot_rng: Optional[np.random.Generator] = None,
):
    """Bob and the attacker both active on ``positions``; returns the overlap observation.

    ``pilot_rng`` (defaults to ``rng``) draws Bob's phase index and the
    attacker's pilots, so callers can share them across antenna counts.
    """
    attack = attack or AttackConfig("PTS", pip_time="random")
    pilot_rng = rng if pilot_rng is None else pilot_rng
    positions = np.asarray(positions)
    s = positions.size
    x_b = pilot_values(PilotConfig(1.0, c_phases, int(pilot_rng.integers(c_phases)), phi_bar))
    x_a = attacker_pilots(attack, x_b, s, phi_bar, pilot_rng)
    cir_b = CirRealization(draw_cir(stats_b.cov, l_taps, rng, size=1, sqrt=stats_b.sqrt)[0])
    cir_a = CirRealization(draw_cir(stats_a.cov, l_taps, rng, size=1, sqrt=stats_a.sqrt)[0])
    active = Sap(np.ones(s, dtype=bool))
    grid = synthesize_rx_grid(active, x_b, attack, cir_b, cir_a, n_fft, noise_var, rng,
                              positions=positions, sap_a=active.active, x_a=x_a)
    x_l = np.column_stack([x_b[:2], x_a[0, :2]])
    return observe_overlap(grid, range(s), x_l, l_taps), grid
