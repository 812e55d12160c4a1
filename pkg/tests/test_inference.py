import numpy as np
import pytest
from hypothesis import given, strategies as st

from pedsurv.genetics import GeneticModel, build_evidence, founder_prior
from pedsurv.inference import (
    InconsistentEvidence,
    TooLarge,
    brute_force_marginals,
    build_junction_tree,
    check_running_intersection,
    family_posteriors,
    propagate,
)
from pedsurv.pedigree import Pedigree

from conftest import MATING_LOOP_POSTERIORS, person, random_evidence, random_pedigree, trio


def evidence_of(ped, **kw):
    return np.array([build_evidence(r, **kw) for r in ped.individuals])


def test_mating_loop_table(mating_loop):
    post = family_posteriors(mating_loop, evidence_of(mating_loop), GeneticModel(0.01))
    for iid, row in MATING_LOOP_POSTERIORS.items():
        np.testing.assert_allclose(post[iid], row, atol=5e-4, err_msg=f"individual {iid}")


def test_mating_loop_tree_shape(mating_loop):
    jt = build_junction_tree(mating_loop)
    assert len(jt.cliques) == 6
    assert len(jt.edges) == 5
    assert check_running_intersection(jt.cliques, jt.edges)
    assert jt.width == 3


def test_nuclear_family_single_clique():
    jt = build_junction_tree(trio())
    assert jt.cliques == ((0, 1, 2),) and jt.edges == ()


def test_three_generation_chain():
    ped = Pedigree("C", (
        person("g1"), person("g2", sex=2),
        person("p", "g1", "g2"), person("s", sex=2),
        person("c", "p", "s"), person("t", sex=2),
        person("gc", "c", "t"),
    ))
    jt = build_junction_tree(ped)
    assert check_running_intersection(jt.cliques, jt.edges)
    assert jt.width == 2
    # adjacent cliques share the parent of the next generation
    for a, b in jt.edges:
        assert len(set(jt.cliques[a]) & set(jt.cliques[b])) == 1


def test_single_affected_founder():
    ped = Pedigree("S", (person("x", affected=True),))
    post = family_posteriors(ped, evidence_of(ped), GeneticModel(0.01))
    prior = founder_prior(0.01)
    expected = np.r_[0.0, prior[1:] / prior[1:].sum()]
    np.testing.assert_allclose(post.marginals[0], expected, atol=1e-15)
    np.testing.assert_allclose(post.marginals[0], [0, 0.49749, 0.49749, 0.00503], atol=5e-6)
    assert post.log_evidence == pytest.approx(np.log(prior[1:].sum()), abs=1e-14)


def test_uniform_evidence_gives_prior(mating_loop):
    # nobody in this family is inbred, so every marginal is the HWE prior
    post = family_posteriors(mating_loop, np.ones((10, 4)), GeneticModel(0.01))
    np.testing.assert_allclose(post.marginals, np.tile(founder_prior(0.01), (10, 1)), atol=1e-14)
    assert abs(post.log_evidence) < 1e-14


def test_founder_couple_brute_force_equals_prior():
    ped = Pedigree("P", (person("a"), person("b", sex=2)))
    post = brute_force_marginals(ped, np.ones((2, 4)), GeneticModel(0.3))
    np.testing.assert_allclose(post.marginals, np.tile(founder_prior(0.3), (2, 1)), rtol=0, atol=1e-15)


def test_nuclear_family_matches_brute_force():
    ped = trio()
    ev = evidence_of(ped)
    gm = GeneticModel(0.004)
    a = family_posteriors(ped, ev, gm)
    b = brute_force_marginals(ped, ev, gm)
    np.testing.assert_allclose(a.marginals, b.marginals, atol=1e-12)


def test_inconsistent_evidence():
    ped = trio()
    ev = np.ones((3, 4))
    ev[0, 1:] = ev[1, 1:] = 0.0  # both parents non-carriers
    ev[2, 0] = 0.0  # child a carrier
    with pytest.raises(InconsistentEvidence) as exc:
        family_posteriors(ped, ev, GeneticModel(0.01))
    assert exc.value.family_id == "F"


def test_brute_force_size_cap():
    ped = random_pedigree(np.random.default_rng(0), 13)
    with pytest.raises(TooLarge):
        brute_force_marginals(ped, np.ones((13, 4)), GeneticModel(0.1))


@given(st.integers(0, 2**32 - 1), st.integers(1, 10), st.floats(0.001, 0.5))
def test_propagation_equals_enumeration(seed, n, q):
    rng = np.random.default_rng(seed)
    ped = random_pedigree(rng, n)
    ev = random_evidence(rng, n)
    gm = GeneticModel(q)
    try:
        oracle = brute_force_marginals(ped, ev, gm)
    except InconsistentEvidence:
        with pytest.raises(InconsistentEvidence):
            family_posteriors(ped, ev, gm)
        return
    post = family_posteriors(ped, ev, gm)
    np.testing.assert_allclose(post.marginals, oracle.marginals, rtol=0, atol=1e-10)
    assert abs(post.log_evidence - oracle.log_evidence) <= 1e-10
    np.testing.assert_allclose(post.marginals.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(post.marginals >= 0)
    # carrier-only evidence leaves no mass on 00
    assert np.all(post.marginals[ev[:, 0] == 0, 0] == 0)


@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_root_choice_does_not_matter(seed, n):
    rng = np.random.default_rng(seed)
    ped = random_pedigree(rng, n)
    ev = random_evidence(rng, n)
    ev[:, 1:] = np.maximum(ev[:, 1:], 0.1)  # keep it consistent
    ev[:, 0] = np.maximum(ev[:, 0], 0.1)
    gm = GeneticModel(0.05)
    base = build_junction_tree(ped)
    ref = propagate(base, ev, gm)
    for root in range(len(base.cliques)):
        other = propagate(build_junction_tree(ped, root=root), ev, gm)
        np.testing.assert_allclose(other.marginals, ref.marginals, atol=1e-12)
        assert other.log_evidence == pytest.approx(ref.log_evidence, abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_relabelling_is_equivariant(seed, n):
    rng = np.random.default_rng(seed)
    ped = random_pedigree(rng, n)
    ev = random_evidence(rng, n)
    ev[:, 0] = np.maximum(ev[:, 0], 0.2)
    perm = rng.permutation(n)
    shuffled = Pedigree(ped.family_id, tuple(ped.individuals[i] for i in perm))
    gm = GeneticModel(0.02)
    a = family_posteriors(ped, ev, gm)
    b = family_posteriors(shuffled, ev[perm], gm)
    for iid in ped.ids:
        np.testing.assert_allclose(a[iid], b[iid], atol=1e-12)
    assert a.log_evidence == pytest.approx(b.log_evidence, abs=1e-12)


def test_disconnected_members():
    # a married-in spouse without children in the file is its own component
    ped = Pedigree("D", trio().individuals + (person("lone", sex=2, affected=True),))
    ev = evidence_of(ped)
    gm = GeneticModel(0.01)
    np.testing.assert_allclose(family_posteriors(ped, ev, gm).marginals,
                               brute_force_marginals(ped, ev, gm).marginals, atol=1e-12)
