"""Analysis workflows built on the EM engine: baseline comparison and
group log-rank testing."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .em import EMConfig, EMResult, make_design, run_em, strata_codes, survival_sample
from .genetics import GeneticModel
from .pedigree import Dataset
from .survival import LogRankResult, SurvivalModel, logrank_test


class UnknownColumn(KeyError):
    """The named grouping column is neither ``sex`` nor a covariate."""


class UnknownGroupVariation(ValueError):
    """The grouping column takes a single value."""


@dataclass
class BaselineComparison:
    cox: EMResult
    weibull: EMResult
    ages: tuple[float, ...]
    # rows: strata; columns: ages
    cox_values: np.ndarray
    weibull_values: np.ndarray

    @property
    def discrepancy(self) -> float:
        return float(np.max(np.abs(self.cox_values - self.weibull_values)))

    def to_dict(self) -> dict:
        return {
            "ages": list(self.ages),
            "strata": list(self.cox.curves),
            "semiparametric": self.cox_values.tolist(),
            "weibull": self.weibull_values.tolist(),
            "max_abs_discrepancy": self.discrepancy,
            "weibull_parameters": {
                str(s): {"shape": b.shape, "scale": b.scale} for s, b in self.weibull.model.baselines.items()
            },
        }


def _baseline_at(model: SurvivalModel, ages, strata) -> np.ndarray:
    p = model.beta.shape[0]
    return np.array([[float(model.survival(a, np.zeros(p), s)) for a in ages] for s in strata])


def compare_baselines(ds: Dataset, gm: GeneticModel, cfg: EMConfig) -> BaselineComparison:
    """Fit the same data with the semi-parametric and the Weibull M-step."""
    cox = run_em(ds, gm, replace(cfg, m_step="cox"))
    wei = run_em(ds, gm, replace(cfg, m_step="weibull"))
    strata = sorted(set(cox.model.baselines) & set(wei.model.baselines))
    ages = tuple(cfg.checkpoint_ages)
    return BaselineComparison(cox, wei, ages, _baseline_at(cox.model, ages, strata),
                              _baseline_at(wei.model, ages, strata))


@dataclass
class GroupTest:
    em: EMResult
    groups: dict[int, str]
    result: LogRankResult

    def to_dict(self) -> dict:
        out = self.result.to_dict()
        out["groups"] = [self.groups[g] for g in sorted(self.groups)]
        out["em_converged"] = self.em.converged
        out["em_iterations"] = self.em.state.iteration
        return out


def logrank_by_group(ds: Dataset, gm: GeneticModel, cfg: EMConfig, group: str) -> GroupTest:
    """EM with one baseline per group, then a weighted log-rank test across groups."""
    if group != "sex" and group not in ds.covariate_names:
        raise UnknownColumn(group)
    codes, labels = strata_codes(ds, group)
    present = sorted(set(codes.tolist()))
    if len(present) < 2:
        raise UnknownGroupVariation(f"grouping column {group!r} is constant")
    cfg = replace(cfg, strata=group)
    em = run_em(ds, gm, cfg)
    design = make_design(ds, cfg)
    sample = survival_sample(design, em.weights)
    groups = [sample.subset(sample.strata == g) for g in present]
    res = logrank_test(groups)
    return GroupTest(em, {g: labels[g] for g in present}, res)
