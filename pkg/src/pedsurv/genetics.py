"""Biallelic dominant-disease genetic model.

Genotypes are indexed by ``paternal + 2 * maternal`` allele, giving the fixed
state order ``00, 10, 01, 11`` (first digit = allele received from the father).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pedigree import GenotypeTest, IndividualRecord

GENOTYPES = ("00", "10", "01", "11")
N_STATES = 4
CARRIER = np.array([False, True, True, True])


def paternal_allele(g: int) -> int:
    return g & 1


def maternal_allele(g: int) -> int:
    return g >> 1


def genotype_index(paternal: int, maternal: int) -> int:
    return paternal + 2 * maternal


class ContradictoryEvidence(ValueError):
    """An individual's data rule out all four genotypes."""

    def __init__(self, individual_id: str, family_id: str | None = None):
        self.individual_id = individual_id
        self.family_id = family_id
        where = f" (family {family_id})" if family_id is not None else ""
        super().__init__(f"no genotype compatible with data of individual {individual_id!r}{where}")


@dataclass(frozen=True)
class GeneticModel:
    q: float
    de_novo_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"allele frequency must lie in (0, 1), got {self.q}")
        if self.de_novo_rate != 0.0:
            raise ValueError("de novo mutation is not supported (rate must be 0)")


def founder_prior(model: GeneticModel | float) -> np.ndarray:
    """Hardy-Weinberg genotype probabilities over (00, 10, 01, 11)."""
    q = model.q if isinstance(model, GeneticModel) else float(model)
    p = 1.0 - q
    return np.array([p * p, q * p, p * q, q * q])


def _build_transmission() -> np.ndarray:
    t = np.zeros((N_STATES,) * 3)
    for f in range(N_STATES):
        for m in range(N_STATES):
            for a in (paternal_allele(f), maternal_allele(f)):
                for b in (paternal_allele(m), maternal_allele(m)):
                    t[genotype_index(a, b), f, m] += 0.25
    t.setflags(write=False)
    return t


# TRANSMISSION[child, father, mother]
TRANSMISSION = _build_transmission()


def transmission_prob(child: int, father: int, mother: int) -> float:
    return float(TRANSMISSION[child, father, mother])


def compatibility(ind: IndividualRecord, use_phenotype: bool = True) -> np.ndarray:
    """0/1 mask of genotypes allowed by the test result (and affection status)."""
    mask = np.ones(N_STATES)
    if ind.genotype_test == GenotypeTest.NEGATIVE:
        mask[1:] = 0.0
    elif ind.genotype_test == GenotypeTest.POSITIVE:
        mask[0] = 0.0
    if use_phenotype and ind.affected:
        mask[0] = 0.0
    return mask


def build_evidence(
    ind: IndividualRecord,
    model=None,
    exclude_phenotype: bool = False,
    *,
    covariates=None,
    stratum: int = 0,
    keep_carrier_constraint: bool = False,
) -> np.ndarray:
    """Likelihood of an individual's own data for each of the four genotypes.

    Affected individuals contribute 1 on carrier states; censored ones
    contribute the carrier survival ``exp(-cumhaz(age) * exp(z @ beta))``
    from ``model`` (anything with a ``cumhaz(t, z, stratum)`` method). With
    ``model=None`` the age carries no information.

    With ``exclude_phenotype`` only the molecular test remains, unless
    ``keep_carrier_constraint`` is set, in which case an affected excluded
    individual is still known to carry the mutation.
    """
    use_pheno = not exclude_phenotype
    ev = compatibility(ind, use_phenotype=use_pheno or keep_carrier_constraint)
    if use_pheno and not ind.affected and model is not None and ind.age > 0:
        z = ind.covariates if covariates is None else covariates
        # floor keeps a tested-positive very old survivor from underflowing to 0
        ev[1:] *= max(np.exp(-model.cumhaz(ind.age, z, stratum)), 1e-300)
    if not ev.any():
        raise ContradictoryEvidence(ind.individual_id, ind.family_id)
    return ev
