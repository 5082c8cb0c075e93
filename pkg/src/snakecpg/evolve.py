"""Evolutionary search over CPG parameters for fast, straight locomotion.

The search space is the real-valued vector (b, tau_r, tau_a, a, w_down,
w_up, A_z) with box bounds.  Fitness comes from a fixed-horizon rollout of
the surrogate with all tonic inputs at 1: a weighted sum of terminal speed
made good, terminal bearing error (penalised) and distance made good.
Genomes that violate the oscillation-existence constraint score -inf, as do
rollouts that diverge.

The optimizer is a plain real-valued evolutionary strategy: tournament
selection, blend crossover, Gaussian mutation and elitism, so the
best-fitness trace is non-decreasing by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .cpg import IntegrationDivergedError, OscillatorParams, TonicInputs, validate_params
from .robot import CpgRobotSession, Goal, PhysicsParams, observe

__all__ = [
    "GENE_FIELDS",
    "FitnessConfig",
    "default_bounds",
    "decode_genome",
    "random_genome",
    "fitness",
    "evolve",
    "EvolveResult",
]

GENE_FIELDS = ("b", "tau_r", "tau_a", "a", "w_down", "w_up", "a_z")


@dataclass
class FitnessConfig:
    """Rollout-fitness weights and horizon."""

    a1: float = 40.0       # terminal speed made good
    a2: float = 100.0      # terminal bearing error (subtracted)
    a3: float = 50.0       # distance made good
    horizon: float = 6.4   # rollout length [s]
    goal_distance: float = 3.0  # straight-ahead target used to define the goal frame

    def __post_init__(self):
        if min(self.a1, self.a2, self.a3) <= 0 or self.horizon <= 0:
            raise ValueError("fitness weights and horizon must be positive")


def default_bounds(base: OscillatorParams | None = None,
                   spread: float = 0.5) -> dict[str, tuple[float, float]]:
    """Box bounds at +/- spread (fraction) around the stock parameter values."""
    base = base or OscillatorParams()
    out = {}
    for name in GENE_FIELDS:
        v = getattr(base, name)
        lo, hi = v * (1.0 - spread), v * (1.0 + spread)
        out[name] = (min(lo, hi), max(lo, hi))
    return out


def decode_genome(genome, base: OscillatorParams | None = None) -> OscillatorParams:
    base = base or OscillatorParams()
    genome = np.asarray(genome, dtype=np.float64)
    if genome.shape != (len(GENE_FIELDS),):
        raise ValueError(f"genome must have {len(GENE_FIELDS)} genes")
    return base.replace(**dict(zip(GENE_FIELDS, (float(g) for g in genome))))


def random_genome(bounds: dict, rng: np.random.Generator) -> np.ndarray:
    return np.array([rng.uniform(*bounds[name]) for name in GENE_FIELDS])


def fitness(genome, cfg: FitnessConfig, phys: PhysicsParams,
            base: OscillatorParams | None = None) -> float:
    """Locomotion fitness F = a1*|v_g(T)| - a2*|theta_g(T)| + a3*|d_g(T)|.

    Evaluated on a T-second rollout with every tonic input at 1, against a
    goal placed straight ahead at reset.  Infeasible genomes (oscillation
    constraint violated) and diverging rollouts score -inf.
    """
    params = decode_genome(genome, base)
    try:
        if not validate_params(params).oscillation_possible:
            return -math.inf
    except ValueError:
        return -math.inf
    try:
        session = CpgRobotSession(params, phys)
        goal = Goal(position=session.robot.head
                    + cfg.goal_distance * np.array([math.cos(session.robot.heading),
                                                    math.sin(session.robot.heading)]),
                    radius=0.1)
        drive = TonicInputs.constant(1.0, params.n_oscillators)
        n_ctrl = int(round(cfg.horizon / params.control_dt))
        for _ in range(n_ctrl):
            session.step_control(drive)
    except IntegrationDivergedError:
        return -math.inf
    obs = observe(session.robot, goal, phys)
    return cfg.a1 * abs(obs.v_g) - cfg.a2 * abs(obs.theta_g) + cfg.a3 * abs(obs.d_g)


@dataclass
class EvolveResult:
    best_genome: np.ndarray
    best_fitness: float
    history: np.ndarray              # (generations, 3): best, mean, std per generation
    population: np.ndarray = field(repr=False, default=None)

    @property
    def best_params(self) -> OscillatorParams:
        return decode_genome(self.best_genome)


def evolve(bounds: dict, pop_size: int = 32, generations: int = 30,
           rng: np.random.Generator | None = None, fitness_fn=None,
           tournament_size: int = 3, mutation_frac: float = 0.05,
           crossover_rate: float = 0.7, elitism: int = 1,
           n_jobs: int = 1) -> EvolveResult:
    """Tournament-select / blend-cross / Gaussian-mutate over the gene box.

    ``fitness_fn(genome) -> float`` defaults to the locomotion fitness with
    stock physics.  The elite individuals survive unchanged each generation
    (their scores are carried over, and rollouts are deterministic), so the
    best-fitness history never decreases.
    """
    if pop_size < 4:
        raise ValueError("population size must be at least 4")
    rng = rng or np.random.default_rng(0)
    if fitness_fn is None:
        cfg, phys = FitnessConfig(), PhysicsParams()
        fitness_fn = lambda g: fitness(g, cfg, phys)  # noqa: E731

    lo = np.array([bounds[name][0] for name in GENE_FIELDS])
    hi = np.array([bounds[name][1] for name in GENE_FIELDS])
    span = hi - lo
    sigma = mutation_frac * span

    pop = np.array([random_genome(bounds, rng) for _ in range(pop_size)])
    scores = np.array(Parallel(n_jobs=n_jobs)(delayed(fitness_fn)(g) for g in pop))

    history = np.empty((generations, 3))
    for gen in range(generations):
        finite = scores[np.isfinite(scores)]
        history[gen] = (scores.max(),
                        finite.mean() if len(finite) else -math.inf,
                        finite.std() if len(finite) else 0.0)

        order = np.argsort(scores)[::-1]
        elite_idx = order[:elitism]
        children = [pop[i].copy() for i in elite_idx]
        child_scores = [float(scores[i]) for i in elite_idx]

        def pick():
            contenders = rng.integers(0, pop_size, size=tournament_size)
            return pop[contenders[np.argmax(scores[contenders])]]

        while len(children) < pop_size:
            p1, p2 = pick(), pick()
            if rng.uniform() < crossover_rate:
                mix = rng.uniform(size=len(GENE_FIELDS))
                child = mix * p1 + (1.0 - mix) * p2
            else:
                child = p1.copy()
            child = child + rng.normal(0.0, sigma)
            children.append(np.clip(child, lo, hi))
            child_scores.append(None)

        pop = np.array(children)
        todo = [i for i, s in enumerate(child_scores) if s is None]
        fresh = Parallel(n_jobs=n_jobs)(delayed(fitness_fn)(pop[i]) for i in todo)
        for i, s in zip(todo, fresh):
            child_scores[i] = float(s)
        scores = np.array(child_scores)

    best = int(np.argmax(scores))
    # final population may beat the last recorded generation; report the max
    best_fit = float(scores[best])
    return EvolveResult(best_genome=pop[best].copy(), best_fitness=best_fit,
                        history=history, population=pop)
