"""EM estimation of carrier survival from partially genotyped pedigrees.

E-step: carrier weights ``w_i = P(X_i != 00 | evidence)`` by junction-tree
propagation, with the censored-carrier evidence taken from the current
survival model. M-step: weighted Cox (or Weibull) fit of carrier survival.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .genetics import GeneticModel, build_evidence
from .inference import InconsistentEvidence, JunctionTree, PosteriorTable, build_junction_tree, propagate
from .pedigree import Dataset, GenotypeTest, Sex
from .survival import SurvivalCurve, SurvivalData, SurvivalModel, fit_cox, fit_weibull, survival_curve, weibull_loglik

log = logging.getLogger(__name__)

M_STEPS = ("cox", "weibull")


class NotConvergedWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class EMConfig:
    m_step: str = "cox"
    covariates: tuple[str, ...] = ()
    # "sex" or the name of a covariate column
    strata: str | None = None
    checkpoint_ages: tuple[float, ...] = (20.0, 40.0, 60.0, 80.0)
    tolerance: float = 1e-5
    max_iterations: int = 100
    seed: int = 0
    exclude_proband_phenotype: bool = True
    retain_proband_carrier_constraint: bool = False

    def __post_init__(self):
        if self.m_step not in M_STEPS:
            raise ValueError(f"m_step must be one of {M_STEPS}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not self.checkpoint_ages or list(self.checkpoint_ages) != sorted(self.checkpoint_ages):
            raise ValueError("checkpoint ages must be non-empty and ascending")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class Design:
    """Flat per-individual arrays in dataset order."""

    time: np.ndarray
    event: np.ndarray
    covariates: np.ndarray
    strata: np.ndarray
    strata_labels: dict[int, str]
    excluded: np.ndarray
    fixed_weight: np.ndarray  # 1 / 0 where evidence alone decides, nan otherwise
    offsets: np.ndarray

    @property
    def n(self) -> int:
        return self.time.shape[0]


def strata_codes(ds: Dataset, strata: str | None) -> tuple[np.ndarray, dict[int, str]]:
    n = ds.n_individuals
    if strata is None:
        return np.zeros(n, dtype=int), {0: "all"}
    if strata == "sex":
        codes = np.array([0 if r.sex == Sex.MALE else 1 for r in ds.individuals()], dtype=int)
        return codes, {0: "male", 1: "female"}
    j = ds.covariate_index(strata)
    vals = np.array([r.covariates[j] for r in ds.individuals()])
    levels = np.unique(vals)
    codes = np.searchsorted(levels, vals)
    return codes, {k: f"{strata}={v:g}" for k, v in enumerate(levels)}


def make_design(ds: Dataset, cfg: EMConfig) -> Design:
    recs = list(ds.individuals())
    idx = [ds.covariate_index(c) for c in cfg.covariates]
    Z = np.array([[r.covariates[j] for j in idx] for r in recs], dtype=float).reshape(len(recs), len(idx))
    codes, labels = strata_codes(ds, cfg.strata)
    excluded = np.array([cfg.exclude_proband_phenotype and r.is_proband for r in recs])
    fixed = np.full(len(recs), np.nan)
    for i, r in enumerate(recs):
        if r.genotype_test == GenotypeTest.NEGATIVE:
            fixed[i] = 0.0
        elif r.genotype_test == GenotypeTest.POSITIVE:
            fixed[i] = 1.0
        elif r.affected and (not excluded[i] or cfg.retain_proband_carrier_constraint):
            fixed[i] = 1.0
    offsets = np.cumsum([0] + [len(f) for f in ds.families])
    return Design(
        time=np.array([r.age for r in recs], dtype=float),
        event=np.array([r.affected for r in recs], dtype=bool),
        covariates=Z,
        strata=codes,
        strata_labels=labels,
        excluded=excluded,
        fixed_weight=fixed,
        offsets=offsets,
    )


def junction_trees(ds: Dataset) -> list[JunctionTree]:
    return [build_junction_tree(f) for f in ds.families]


def posterior_tables(
    ds: Dataset,
    model: SurvivalModel | None,
    gm: GeneticModel,
    cfg: EMConfig,
    design: Design | None = None,
    trees: list[JunctionTree] | None = None,
) -> list[PosteriorTable]:
    """Genotype posteriors of every family given phenotypes, tests and ``model``."""
    design = design or make_design(ds, cfg)
    trees = trees or junction_trees(ds)
    out = []
    for fi, (fam, jt) in enumerate(zip(ds.families, trees)):
        lo = design.offsets[fi]
        ev = np.empty((len(fam), 4))
        for i, rec in enumerate(fam.individuals):
            g = lo + i
            ev[i] = build_evidence(
                rec,
                model,
                exclude_phenotype=bool(design.excluded[g]),
                covariates=design.covariates[g],
                stratum=int(design.strata[g]),
                keep_carrier_constraint=cfg.retain_proband_carrier_constraint,
            )
        try:
            out.append(propagate(jt, ev, gm, fam.ids))
        except InconsistentEvidence:
            raise InconsistentEvidence(fam.family_id) from None
    return out


def compute_weights(
    ds: Dataset,
    model: SurvivalModel | None,
    gm: GeneticModel,
    cfg: EMConfig,
    design: Design | None = None,
    trees: list[JunctionTree] | None = None,
) -> np.ndarray:
    """Posterior carrier probability of every individual, in dataset order."""
    design = design or make_design(ds, cfg)
    w = np.concatenate([t.carrier_prob for t in posterior_tables(ds, model, gm, cfg, design, trees)])
    # exact 0/1 where evidence alone decides, no rounding drift
    fixed = ~np.isnan(design.fixed_weight)
    w[fixed] = design.fixed_weight[fixed]
    return np.clip(w, 0.0, 1.0)


def survival_sample(design: Design, weights: np.ndarray) -> SurvivalData:
    """Weighted M-step sample: phenotyped, non-excluded, possibly-carrier individuals."""
    keep = (~design.excluded) & (weights > 0)
    return SurvivalData(
        design.time[keep],
        design.event[keep],
        np.asarray(weights)[keep],
        design.covariates[keep],
        design.strata[keep],
    )


def m_step(ds: Dataset, weights: np.ndarray, cfg: EMConfig, design: Design | None = None) -> SurvivalModel:
    design = design or make_design(ds, cfg)
    data = survival_sample(design, weights)
    if cfg.m_step == "cox":
        return fit_cox(data)
    return fit_weibull(data)


def q_function(design: Design, weights: np.ndarray, model: SurvivalModel) -> float:
    """Expected complete-data survival log-likelihood (parametric models only)."""
    if model.kind != "weibull":
        raise ValueError("Q is only defined for the parametric M-step")
    return weibull_loglik(survival_sample(design, weights), model)


def checkpoint_survival(model: SurvivalModel, ages, strata) -> np.ndarray:
    """Baseline (z = 0) survival at the checkpoint ages, one row per stratum."""
    p = model.beta.shape[0]
    return np.array([[float(model.survival(a, np.zeros(p), s)) for a in ages] for s in strata])


@dataclass
class EMState:
    iteration: int
    model: SurvivalModel
    weights: np.ndarray
    checkpoints: np.ndarray
    converged: bool


@dataclass
class EMResult:
    state: EMState
    curves: dict[str, SurvivalCurve]
    trace: list[dict] = field(default_factory=list)
    design: Design | None = None

    @property
    def model(self) -> SurvivalModel:
        return self.state.model

    @property
    def weights(self) -> np.ndarray:
        return self.state.weights

    @property
    def converged(self) -> bool:
        return self.state.converged


def initial_weights(design: Design, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.0, 1.0, design.n)
    fixed = ~np.isnan(design.fixed_weight)
    w[fixed] = design.fixed_weight[fixed]
    return w


def baseline_curves(model: SurvivalModel, labels: dict[int, str]) -> dict[str, SurvivalCurve]:
    return {labels[s]: survival_curve(model, None, s, label=labels[s]) for s in model.strata}


def run_em(ds: Dataset, gm: GeneticModel, cfg: EMConfig, track_q: bool | None = None) -> EMResult:
    """Alternate M- and E-steps from random initial weights.

    Individuals whose carrier status is fixed by the evidence (tested, or
    affected and not excluded) start at their exact weight; everybody else
    starts from a seeded uniform draw. Iteration stops once the baseline
    survival at the checkpoint ages moves by at most ``cfg.tolerance``.
    """
    design = make_design(ds, cfg)
    trees = junction_trees(ds)
    track_q = (cfg.m_step == "weibull") if track_q is None else track_q
    weights = initial_weights(design, cfg.seed)
    strata = sorted(design.strata_labels)
    prev = None
    trace: list[dict] = []
    converged = False
    model = None
    for it in range(1, cfg.max_iterations + 1):
        old_model = model
        model = m_step(ds, weights, cfg, design)
        cps = checkpoint_survival(model, cfg.checkpoint_ages, [s for s in strata if s in model.baselines])
        entry = {"iteration": it, "checkpoints": cps.tolist(), "beta": model.beta.tolist()}
        if track_q and old_model is not None:
            entry["q_old"] = q_function(design, weights, old_model)
            entry["q_new"] = q_function(design, weights, model)
        if prev is not None and prev.shape == cps.shape:
            change = float(np.max(np.abs(cps - prev)))
            entry["max_change"] = change
            converged = change <= cfg.tolerance
        trace.append(entry)
        log.debug("EM iteration %d: %s", it, entry)
        prev = cps
        weights = compute_weights(ds, model, gm, cfg, design, trees)
        if converged:
            break
    if not converged:
        warnings.warn(f"EM did not converge in {cfg.max_iterations} iterations", NotConvergedWarning, stacklevel=2)
    state = EMState(it, model, weights, prev, converged)
    return EMResult(state, baseline_curves(model, design.strata_labels), trace, design)
