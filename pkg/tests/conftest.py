from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from pedsurv.pedigree import IndividualRecord, Pedigree, Sex, parse_dataset

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"

# posterior genotype distribution (00, 10, 01, 11) of the mating-loop family,
# q = 0.01, affected individuals known carriers, nothing else observed
MATING_LOOP_POSTERIORS = {
    "1": (0.000, 0.494, 0.494, 0.012),
    "2": (0.965, 0.017, 0.017, 0.000),
    "3": (0.965, 0.017, 0.017, 0.000),
    "4": (0.000, 0.495, 0.495, 0.010),
    "5": (0.389, 0.591, 0.009, 0.012),
    "6": (0.000, 0.977, 0.012, 0.012),
    "7": (0.000, 0.010, 0.975, 0.016),
    "8": (0.486, 0.009, 0.496, 0.009),
    "9": (0.000, 0.203, 0.590, 0.207),
    "10": (0.365, 0.374, 0.129, 0.132),
}


@pytest.fixture
def mating_loop_path() -> Path:
    return DATA / "mating_loop.tsv"


@pytest.fixture
def mating_loop(mating_loop_path):
    return parse_dataset(mating_loop_path).families[0]


def person(iid, father=None, mother=None, sex=1, age=50.0, affected=False, test=0, proband=False,
           cov=(), fid="F"):
    return IndividualRecord(fid, str(iid), father, mother, Sex(sex), float(age), affected, test, proband, cov)


def trio(child_affected=True, proband=True, fid="F"):
    return Pedigree(fid, (
        person("f", fid=fid),
        person("m", sex=2, fid=fid),
        person("c", "f", "m", age=40.0, affected=child_affected, proband=proband, fid=fid),
    ))


def random_pedigree(rng: np.random.Generator, n: int, fid: str = "R") -> Pedigree:
    """Random valid pedigree of exactly ``n`` individuals (founders first).

    Each non-founder picks a father and mother among earlier males/females,
    so loops, half-sibs and inbreeding all occur.
    """
    recs = []
    for i in range(n):
        males = [r for r in recs if r.sex == Sex.MALE]
        females = [r for r in recs if r.sex == Sex.FEMALE]
        sex = int(rng.integers(1, 3))
        if males and females and i >= 2 and rng.random() < 0.7:
            fa = males[rng.integers(len(males))].individual_id
            mo = females[rng.integers(len(females))].individual_id
        else:
            fa = mo = None
        recs.append(person(i + 1, fa, mo, sex=sex, fid=fid))
    return Pedigree(fid, tuple(recs))


def random_evidence(rng: np.random.Generator, n: int) -> np.ndarray:
    ev = np.ones((n, 4))
    kind = rng.integers(0, 5, n)
    ev[kind == 1, 0] = 0.0  # affected or positive
    ev[kind == 2, 1:] = 0.0  # tested negative
    cens = kind == 3
    ev[cens, 1:] = rng.uniform(0.05, 1.0, cens.sum())[:, None]
    return ev


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
