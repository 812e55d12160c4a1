import numpy as np
import pytest
from hypothesis import given, strategies as st

from pedsurv.genetics import founder_prior
from pedsurv.pedigree import GenotypeTest, Pedigree, format_dataset, validate
from pedsurv.simulate import (
    ONSET_HAZARD,
    HazardSpec,
    NoFamiliesAscertained,
    SimulationConfig,
    config_from_dict,
    draw_event_time,
    gene_drop,
    load_template,
    simulate,
    synthetic_template,
)
from pedsurv.survival import SurvivalData, fit_breslow_baseline

from conftest import person, random_pedigree


@pytest.fixture(scope="module")
def template():
    return load_template()


def test_onset_hazard_checkpoints():
    np.testing.assert_allclose(ONSET_HAZARD.survival([20, 40, 60, 80]),
                               np.exp([0.0, -0.4, -2.4, -3.4]), rtol=1e-14)
    np.testing.assert_allclose(ONSET_HAZARD.survival([40, 60, 80]), [0.670, 0.0907, 0.0334], atol=5e-4)


@given(st.floats(0, 150))
def test_inverse_cumhaz_inverts(t):
    h = ONSET_HAZARD
    x = float(h.cumhaz(t))
    back = float(h.inverse_cumhaz(x))
    # zero hazard up to 20: every earlier age maps back to 0
    assert back == pytest.approx(t if t > 20 else 0.0, abs=1e-9)


def test_hazard_validation():
    with pytest.raises(ValueError):
        HazardSpec((20.0,), (0.1,))
    with pytest.raises(ValueError):
        HazardSpec((20.0,), (0.1, -0.1))
    with pytest.raises(ValueError):
        HazardSpec((40.0, 20.0), (0.1, 0.1, 0.1))


def test_event_time_sentinel():
    h = HazardSpec((10.0,), (0.01, 0.0))
    t = draw_event_time(h, np.zeros(20_000), np.random.default_rng(0))
    assert np.isinf(t).mean() == pytest.approx(np.exp(-0.1), abs=0.015)
    assert np.all(t[np.isfinite(t)] <= 10.0)


def test_event_time_distribution():
    n = 100_000
    t = draw_event_time(ONSET_HAZARD, np.zeros(n), np.random.default_rng(1))
    assert t.min() >= 20.0
    for age in (40, 60, 80):
        p = ONSET_HAZARD.survival(age)
        assert abs(np.mean(t > age) - p) <= 3 * np.sqrt(p * (1 - p) / n)
    faster = draw_event_time(ONSET_HAZARD, np.full(n, np.log(2.0)), np.random.default_rng(1))
    assert np.median(faster) < np.median(t)


def test_gene_drop_extremes():
    ped = random_pedigree(np.random.default_rng(0), 12)
    assert np.all(gene_drop(ped, 0.0, 1) == 0)
    assert np.all(gene_drop(ped, 1.0, 1) == 3)


def test_gene_drop_founder_frequency():
    ped = random_pedigree(np.random.default_rng(0), 1)
    rng = np.random.default_rng(2)
    n = 100_000
    carriers = sum(gene_drop(ped, 0.004, rng)[0] != 0 for _ in range(n))
    p = 1 - 0.996 ** 2
    assert abs(carriers / n - p) <= 3 * np.sqrt(p * (1 - p) / n)


def test_gene_drop_genotype_frequencies_in_descendants():
    # without inbreeding every member is marginally at Hardy-Weinberg
    ped = Pedigree("N", (person("f"), person("m", sex=2), person("c", "f", "m")))
    rng = np.random.default_rng(3)
    draws = np.array([gene_drop(ped, 0.3, rng) for _ in range(40_000)])
    freq = np.bincount(draws[:, 2], minlength=4) / len(draws)
    np.testing.assert_allclose(freq, founder_prior(0.3), atol=0.01)


def test_no_carriers_no_families(template):
    with pytest.raises(NoFamiliesAscertained):
        simulate(SimulationConfig(template, q=0.0))
    with pytest.raises(NoFamiliesAscertained):
        simulate(SimulationConfig(template, hazard=HazardSpec((20.0,), (0.0, 0.0))))


def test_default_configuration(template):
    sim = simulate(SimulationConfig(template, k=3, q=0.004, seed=0))
    ds = sim.dataset
    assert len(ds) == 105
    assert all(r.genotype_test == GenotypeTest.UNTESTED for r in ds.individuals())
    assert validate(ds, require_probands=True) == []
    truth = {(t.family_id, t.individual_id): t for t in sim.truth}
    for fam in ds.families:
        assert any(r.affected for r in fam.individuals)
        proband = fam.individuals[fam.proband_indices()[0]]
        assert proband.affected
        for r in fam.individuals:
            t = truth[(r.family_id, r.individual_id)]
            if r.affected:
                assert t.carrier and r.age == t.event_time <= t.censor_age
            else:
                assert r.age == t.censor_age and t.event_time > t.censor_age
    ids = [f.family_id for f in ds.families]
    assert ids[:3] == [f"{template.families[0].family_id}.{i}" for i in (1, 2, 3)]
    assert ds.covariate_names == ("female",)


def test_unmasked_genotypes(template):
    sim = simulate(SimulationConfig(template, k=1, seed=4, mask_genotypes=False))
    recs = list(sim.dataset.individuals())
    carriers = [t.carrier for t in sim.truth]
    assert all((r.genotype_test == GenotypeTest.POSITIVE) == c for r, c in zip(recs, carriers))
    assert all(c for r, c in zip(recs, carriers) if r.affected)


def test_determinism(template):
    a = simulate(SimulationConfig(template, seed=9))
    b = simulate(SimulationConfig(template, seed=9))
    assert format_dataset(a.dataset) == format_dataset(b.dataset)
    assert a.truth_tsv() == b.truth_tsv()
    c = simulate(SimulationConfig(template, seed=10))
    assert format_dataset(c.dataset) != format_dataset(a.dataset)


def test_filter_ascertainment_drops_families(template):
    sim = simulate(SimulationConfig(template, k=1, q=0.03, seed=0, ascertainment="filter"))
    assert 0 < len(sim.dataset) < 35
    assert all(any(r.affected for r in f.individuals) for f in sim.dataset.families)


def test_proband_ascertainment(template):
    sim = simulate(SimulationConfig(template, k=1, q=0.004, seed=0, ascertainment="proband"))
    slots = {f.family_id: f.ids[f.proband_indices()[0]] for f in template.families}
    for fam in sim.dataset.families:
        p = fam.individuals[fam.proband_indices()[0]]
        assert p.affected and p.individual_id == slots[fam.family_id]


def test_sex_effect_and_hazard():
    tmpl = synthetic_template(35, seed=1)
    sim = simulate(SimulationConfig(tmpl, k=2, q=0.05, seed=2, beta={"female": -2.0}, mask_genotypes=False))
    recs = list(sim.dataset.individuals())
    carriers = [r for r, t in zip(recs, sim.truth) if t.carrier and not r.is_proband]
    rate = {}
    for f in (0.0, 1.0):
        grp = [r for r in carriers if r.covariates[-1] == f]
        rate[f] = sum(r.affected for r in grp) / sum(r.age for r in grp)
    assert rate[1.0] < rate[0.0]
    with pytest.raises(KeyError):
        simulate(SimulationConfig(tmpl, beta={"height": 1.0}))


def test_true_genotype_survival_is_consistent():
    # Breslow on all true carriers approaches exp(-Lambda); at a common allele
    # the ascertainment condition barely selects
    tmpl = synthetic_template(35, seed=3)
    sim = simulate(SimulationConfig(tmpl, k=20, q=0.1, seed=5, censoring=(60.0, 100.0)))
    recs = list(sim.dataset.individuals())
    keep = [i for i, t in enumerate(sim.truth) if t.carrier]
    data = SurvivalData.from_arrays([recs[i].age for i in keep], [recs[i].affected for i in keep])
    base = fit_breslow_baseline(data)[0]
    np.testing.assert_allclose(base.survival([40.0, 60.0]), ONSET_HAZARD.survival([40.0, 60.0]), atol=0.03)


def test_config_from_dict(template):
    cfg = config_from_dict({"k": 2, "q": 0.01, "seed": 4, "beta": {"female": -0.4},
                            "hazard": {"breakpoints": [30], "rates": [0.0, 0.05]},
                            "censoring": [20, 90], "ascertainment": "filter"}, template)
    assert cfg.k == 2 and cfg.hazard.rates == (0.0, 0.05) and cfg.censoring == (20.0, 90.0)
    with pytest.raises(ValueError):
        config_from_dict({"bogus": 1}, template)


def test_packaged_template_matches_generator(template):
    assert format_dataset(template) == format_dataset(synthetic_template())
    assert len(template) == 35
    assert validate(template, require_probands=True) == []
    sizes = [len(f) for f in template.families]
    assert 5 <= min(sizes) and max(sizes) <= 60
