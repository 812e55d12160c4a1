"""Pedigree simulation: gene dropping, piecewise-constant hazards, censoring,
ascertainment on affected members and optional genotype masking."""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .genetics import GENOTYPES, genotype_index, maternal_allele, paternal_allele
from .pedigree import (
    Dataset,
    GenotypeTest,
    IndividualRecord,
    Pedigree,
    Sex,
    format_dataset,
    read_dataset,
)

log = logging.getLogger(__name__)


class NoFamiliesAscertained(RuntimeError):
    pass


@dataclass(frozen=True)
class HazardSpec:
    """Piecewise-constant hazard: ``rates[0]`` on ``[0, breakpoints[0]]``, ...,
    ``rates[-1]`` beyond the last breakpoint."""

    breakpoints: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        if len(self.rates) != len(self.breakpoints) + 1:
            raise ValueError("need exactly one more rate than breakpoints")
        if any(r < 0 for r in self.rates):
            raise ValueError("rates must be non-negative")
        if list(self.breakpoints) != sorted(self.breakpoints) or any(b <= 0 for b in self.breakpoints):
            raise ValueError("breakpoints must be positive and ascending")

    @classmethod
    def from_cumhaz(cls, cumhaz, breakpoints, tail_rate: float | None = None) -> "HazardSpec":
        """Piecewise-constant hazard matching ``cumhaz`` exactly at the breakpoints.

        Beyond the last breakpoint the rate is ``tail_rate`` (default: the
        rate of the last piece).
        """
        b = np.asarray(breakpoints, dtype=float)
        edges = np.concatenate([[0.0], b])
        rates = np.diff([float(cumhaz(t)) for t in edges]) / np.diff(edges)
        tail = float(rates[-1]) if tail_rate is None else float(tail_rate)
        return cls(tuple(float(x) for x in b), tuple(float(r) for r in rates) + (tail,))

    @property
    def _edges(self) -> np.ndarray:
        return np.concatenate([[0.0], self.breakpoints])

    @property
    def _cum_at_edges(self) -> np.ndarray:
        widths = np.diff(self._edges)
        return np.concatenate([[0.0], np.cumsum(widths * np.asarray(self.rates[:-1]))])

    def cumhaz(self, t):
        t = np.asarray(t, dtype=float)
        edges = self._edges
        j = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(self.rates) - 1)
        rates = np.asarray(self.rates)
        return self._cum_at_edges[j] + rates[j] * (t - edges[j])

    def survival(self, t):
        return np.exp(-self.cumhaz(t))

    def inverse_cumhaz(self, x):
        """Smallest ``t`` with ``cumhaz(t) >= x``; ``inf`` if never reached."""
        x = np.asarray(x, dtype=float)
        cum = self._cum_at_edges
        edges = self._edges
        rates = np.asarray(self.rates)
        j = np.searchsorted(cum, x, side="left") - 1
        j = np.clip(j, 0, len(rates) - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = edges[j] + (x - cum[j]) / rates[j]
        t = np.where(x <= 0, 0.0, t)
        # a zero-rate final piece never accumulates further hazard
        beyond = (j == len(rates) - 1) & (rates[-1] == 0) & (x > cum[-1])
        return np.where(beyond, np.inf, t)


ONSET_HAZARD = HazardSpec((20.0, 40.0, 60.0), (0.0, 0.02, 0.10, 0.05))


def draw_event_time(h: HazardSpec, linear_predictor=0.0, rng=None):
    """Inverse-transform draw solving ``cumhaz(t) * exp(lp) = E``, ``E ~ Exp(1)``.

    Vectorises over ``linear_predictor``.
    """
    rng = np.random.default_rng(rng)
    lp = np.asarray(linear_predictor, dtype=float)
    e = rng.standard_exponential(lp.shape)
    out = h.inverse_cumhaz(e * np.exp(-lp))
    return float(out) if out.ndim == 0 else out


def gene_drop(ped: Pedigree, q: float, rng=None) -> np.ndarray:
    """Genotype indices (0..3) for every individual of ``ped``."""
    rng = np.random.default_rng(rng)
    n = len(ped)
    g = np.zeros(n, dtype=int)
    for i in ped.topological_order():
        if ped.father[i] < 0:
            a, b = (rng.random(2) < q).astype(int)
        else:
            gf, gm = g[ped.father[i]], g[ped.mother[i]]
            pick = rng.random(2) < 0.5
            a = paternal_allele(gf) if pick[0] else maternal_allele(gf)
            b = paternal_allele(gm) if pick[1] else maternal_allele(gm)
        g[i] = genotype_index(int(a), int(b))
    return g


@dataclass
class SimulationConfig:
    template: Dataset
    k: int = 3
    q: float = 0.004
    hazard: HazardSpec = ONSET_HAZARD
    # sex-specific hazard for females; None means everyone follows ``hazard``
    female_hazard: HazardSpec | None = None
    # covariate name -> coefficient; "female" is always available
    beta: Mapping[str, float] = field(default_factory=dict)
    censoring: tuple[float, float] = (15.0, 100.0)
    seed: int = 0
    mask_genotypes: bool = True
    # "retry": redraw a replicate until it has an affected member;
    # "filter": single draw, unascertained replicates are dropped;
    # "proband": redraw until the template proband slot is affected
    ascertainment: str = "retry"
    max_attempts: int = 5000

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("q must lie in [0, 1]")
        lo, hi = self.censoring
        if not 0 <= lo <= hi:
            raise ValueError("invalid censoring window")
        if self.ascertainment not in ("retry", "filter", "proband"):
            raise ValueError("ascertainment must be 'retry', 'filter' or 'proband'")


def _hazard_from(d) -> HazardSpec | None:
    if d is None:
        return None
    return HazardSpec(tuple(float(b) for b in d["breakpoints"]), tuple(float(r) for r in d["rates"]))


CONFIG_KEYS = {"template", "k", "q", "hazard", "female_hazard", "beta", "censoring", "seed",
               "mask_genotypes", "ascertainment", "max_attempts"}


def config_from_dict(d: Mapping, template: Dataset | None = None) -> SimulationConfig:
    """Build a config from parsed JSON. ``template`` is "builtin" (default) or a TSV path."""
    unknown = set(d) - CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown simulation config keys: {sorted(unknown)}")
    if template is None:
        src = d.get("template", "builtin")
        if src == "builtin":
            template = load_template()
        else:
            from .pedigree import parse_dataset
            template = parse_dataset(src)
    kw = {k: d[k] for k in ("k", "q", "seed", "mask_genotypes", "ascertainment", "max_attempts") if k in d}
    if "hazard" in d:
        kw["hazard"] = _hazard_from(d["hazard"])
    if "female_hazard" in d:
        kw["female_hazard"] = _hazard_from(d["female_hazard"])
    if "beta" in d:
        kw["beta"] = {str(k): float(v) for k, v in d["beta"].items()}
    if "censoring" in d:
        lo, hi = d["censoring"]
        kw["censoring"] = (float(lo), float(hi))
    return SimulationConfig(template, **kw)


@dataclass(frozen=True)
class TruthRecord:
    family_id: str
    individual_id: str
    genotype: int
    event_time: float
    censor_age: float

    @property
    def carrier(self) -> bool:
        return self.genotype != 0


@dataclass(frozen=True)
class Simulation:
    dataset: Dataset
    truth: tuple[TruthRecord, ...]
    attempts: int

    def truth_tsv(self) -> str:
        buf = io.StringIO()
        buf.write("family_id\tindividual_id\tgenotype\tcarrier\tevent_time\tcensor_age\n")
        for t in self.truth:
            et = "inf" if math.isinf(t.event_time) else repr(float(t.event_time))
            buf.write(f"{t.family_id}\t{t.individual_id}\t{GENOTYPES[t.genotype]}\t{int(t.carrier)}\t"
                      f"{et}\t{float(t.censor_age)!r}\n")
        return buf.getvalue()


def _covariate_frame(template: Dataset) -> tuple[tuple[str, ...], bool]:
    names = tuple(template.covariate_names)
    add_female = "female" not in names
    return (names + ("female",) if add_female else names), add_female


def _simulate_family(fam: Pedigree, new_id: str, cfg: SimulationConfig, names, add_female, rng):
    n = len(fam)
    covs = np.array([r.covariates + ((1.0 if r.sex == Sex.FEMALE else 0.0,) if add_female else ())
                     for r in fam.individuals], dtype=float).reshape(n, len(names))
    beta = np.array([cfg.beta.get(nm, 0.0) for nm in names], dtype=float)
    unknown = set(cfg.beta) - set(names)
    if unknown:
        raise KeyError(f"beta refers to unknown covariates {sorted(unknown)}")
    lp = covs @ beta
    female = np.array([r.sex == Sex.FEMALE for r in fam.individuals])
    template_age = np.array([r.age for r in fam.individuals])
    slot = fam.proband_indices()
    attempts = 0
    while True:
        attempts += 1
        geno = gene_drop(fam, cfg.q, rng)
        carrier = geno != 0
        ev = np.full(n, np.inf)
        hz_m = cfg.hazard
        hz_f = cfg.female_hazard or cfg.hazard
        for sel, hz in ((~female, hz_m), (female, hz_f)):
            idx = np.flatnonzero(sel & carrier)
            if idx.size:
                ev[idx] = draw_event_time(hz, lp[idx], rng)
        cens = np.minimum(template_age, rng.uniform(*cfg.censoring, size=n))
        affected = ev <= cens
        if (affected[slot[0]] if cfg.ascertainment == "proband" and slot else affected.any()):
            break
        if cfg.ascertainment == "filter" or attempts >= cfg.max_attempts:
            return None, attempts

    if slot and affected[slot[0]]:
        proband = slot[0]
    else:
        proband = int(rng.choice(np.flatnonzero(affected)))
    age = np.where(affected, ev, cens)
    recs = []
    truth = []
    for i, r in enumerate(fam.individuals):
        if cfg.mask_genotypes:
            test = GenotypeTest.UNTESTED
        else:
            test = GenotypeTest.POSITIVE if carrier[i] else GenotypeTest.NEGATIVE
        recs.append(replace(
            r,
            family_id=new_id,
            age=float(age[i]),
            affected=bool(affected[i]),
            genotype_test=test,
            is_proband=(i == proband),
            covariates=tuple(float(c) for c in covs[i]),
        ))
        truth.append(TruthRecord(new_id, r.individual_id, int(geno[i]), float(ev[i]), float(cens[i])))
    return (Pedigree(new_id, tuple(recs)), truth), attempts


def simulate(cfg: SimulationConfig) -> Simulation:
    """Replicate each template family ``k`` times and simulate phenotypes.

    Every replicate gets its own RNG stream spawned from ``cfg.seed`` so the
    result does not depend on processing order.
    """
    names, add_female = _covariate_frame(cfg.template)
    no_hazard = all(r == 0 for r in cfg.hazard.rates) and (
        cfg.female_hazard is None or all(r == 0 for r in cfg.female_hazard.rates))
    if cfg.q <= 0.0 or no_hazard:
        raise NoFamiliesAscertained("no carriers or no hazard: no family can be ascertained")
    streams = np.random.SeedSequence(cfg.seed).spawn(len(cfg.template) * cfg.k)
    fams, truth = [], []
    total_attempts = 0
    s = 0
    for fam in cfg.template.families:
        for rep in range(cfg.k):
            rng = np.random.default_rng(streams[s])
            s += 1
            new_id = fam.family_id if cfg.k == 1 else f"{fam.family_id}.{rep + 1}"
            out, attempts = _simulate_family(fam, new_id, cfg, names, add_female, rng)
            total_attempts += attempts
            if out is None:
                log.info("replicate %s not ascertained after %d attempts", new_id, attempts)
                continue
            fams.append(out[0])
            truth.extend(out[1])
    if not fams:
        raise NoFamiliesAscertained("no simulated family has an affected member")
    return Simulation(Dataset(tuple(fams), names), tuple(truth), total_attempts)


# -- synthetic template ------------------------------------------------------


def synthetic_template(n_families: int = 35, seed: int = 35) -> Dataset:
    """Three- to four-generation families of roughly 10-40 members.

    A founder couple has 2-5 children; most children marry in a spouse and
    have 1-4 children of their own, some of whom continue one more
    generation. The proband slot is a randomly chosen blood relative in the
    second or third generation.
    """
    rng = np.random.default_rng(seed)
    fams = []
    for f in range(n_families):
        fid = f"F{f + 1:02d}"
        recs: list[IndividualRecord] = []
        blood: list[tuple[str, int]] = []
        counter = [0]

        def new(sex, age, father=None, mother=None, is_blood=True, gen=0):
            counter[0] += 1
            iid = f"{fid}-{counter[0]}"
            recs.append(IndividualRecord(fid, iid, father, mother, Sex(sex), round(float(age), 1), False))
            if is_blood:
                blood.append((iid, gen))
            return iid

        def sex_of(iid):
            return next(r.sex for r in recs if r.individual_id == iid)

        def family(parent, gen, age_range):
            spouse_sex = 2 if sex_of(parent) == Sex.MALE else 1
            spouse = new(spouse_sex, rng.uniform(*age_range), is_blood=False, gen=gen)
            father, mother = (parent, spouse) if spouse_sex == 2 else (spouse, parent)
            return father, mother

        gf = new(1, rng.uniform(80, 100))
        gm = new(2, rng.uniform(80, 100))
        for _ in range(rng.integers(2, 6)):
            child = new(rng.integers(1, 3), rng.uniform(55, 95), gf, gm, gen=1)
            if rng.random() < 0.8:
                fa, mo = family(child, 1, (55, 95))
                for _ in range(rng.integers(1, 5)):
                    grandchild = new(rng.integers(1, 3), rng.uniform(30, 70), fa, mo, gen=2)
                    if rng.random() < 0.35:
                        fa2, mo2 = family(grandchild, 2, (30, 70))
                        for _ in range(rng.integers(1, 4)):
                            new(rng.integers(1, 3), rng.uniform(5, 45), fa2, mo2, gen=3)
        candidates = [iid for iid, gen in blood if gen in (1, 2)]
        proband = candidates[rng.integers(len(candidates))]
        recs = [replace(r, is_proband=(r.individual_id == proband)) for r in recs]
        fams.append(Pedigree(fid, tuple(recs)))
    return Dataset(tuple(fams), ())


TEMPLATE_RESOURCE = "template35.tsv"


def load_template() -> Dataset:
    """The packaged 35-family synthetic template."""
    text = resources.files("pedsurv.data").joinpath(TEMPLATE_RESOURCE).read_text(encoding="utf-8")
    return read_dataset(io.StringIO(text))


def write_template_resource(path) -> None:
    from pathlib import Path

    Path(path).write_text(format_dataset(synthetic_template()), encoding="utf-8")
