"""Pedigree records, TSV parsing/serialization and structural validation.

File layout (tab separated, one individual per row)::

    family_id  individual_id  father_id  mother_id  sex  age  status  genotype_test  proband  [covariates...]

``0`` marks an absent parent, sex is 1=male/2=female, status 1=affected/0=unaffected,
genotype_test 0=untested/1=positive/2=negative, proband 0/1. An optional header
line starting with ``family_id`` (or ``#``) names the covariate columns.
"""
from __future__ import annotations

import enum
import io
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BASE_COLUMNS = (
    "family_id",
    "individual_id",
    "father_id",
    "mother_id",
    "sex",
    "age",
    "status",
    "genotype_test",
    "proband",
)
MISSING_AGE = {"", "NA", "na", ".", "nan", "NaN"}


class Sex(enum.IntEnum):
    MALE = 1
    FEMALE = 2


class GenotypeTest(enum.IntEnum):
    UNTESTED = 0
    POSITIVE = 1
    NEGATIVE = 2


class PedigreeError(ValueError):
    """Base class for structural problems in pedigree input."""


class MalformedRow(PedigreeError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class UnknownParent(PedigreeError):
    pass


class SexInconsistentParent(PedigreeError):
    pass


class AncestryCycle(PedigreeError):
    pass


class DuplicateIndividualId(PedigreeError):
    pass


class SingleParent(PedigreeError):
    pass


class ProbandCount(PedigreeError):
    pass


class DuplicateFamilyId(PedigreeError):
    pass


_STRUCTURAL = {
    "UnknownParent": UnknownParent,
    "SexInconsistentParent": SexInconsistentParent,
    "AncestryCycle": AncestryCycle,
    "DuplicateIndividualId": DuplicateIndividualId,
    "SingleParent": SingleParent,
    "DuplicateFamilyId": DuplicateFamilyId,
    "ProbandCount": ProbandCount,
    "MalformedRow": MalformedRow,
}


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    family_id: str
    individual_id: str | None
    message: str

    def to_error(self) -> PedigreeError:
        cls = _STRUCTURAL.get(self.kind, PedigreeError)
        return cls(f"family {self.family_id}: {self.message}")


@dataclass(frozen=True)
class IndividualRecord:
    family_id: str
    individual_id: str
    father_id: str | None
    mother_id: str | None
    sex: Sex
    age: float
    affected: bool
    genotype_test: GenotypeTest = GenotypeTest.UNTESTED
    is_proband: bool = False
    covariates: tuple[float, ...] = ()

    @property
    def is_founder(self) -> bool:
        return self.father_id is None and self.mother_id is None


@dataclass(frozen=True)
class Pedigree:
    """One family. Parent links are resolved to row indices (-1 for founders).

    Construction does not validate; use :func:`diagnose_family` or
    :func:`build_pedigree` for checked construction.
    """

    family_id: str
    individuals: tuple[IndividualRecord, ...]
    father: np.ndarray = field(init=False, repr=False, compare=False)
    mother: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {}
        for i, ind in enumerate(self.individuals):
            index.setdefault(ind.individual_id, i)
        father = np.array([index.get(r.father_id, -1) for r in self.individuals], dtype=int)
        mother = np.array([index.get(r.mother_id, -1) for r in self.individuals], dtype=int)
        father.setflags(write=False)
        mother.setflags(write=False)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "father", father)
        object.__setattr__(self, "mother", mother)

    def __len__(self) -> int:
        return len(self.individuals)

    def index_of(self, individual_id: str) -> int:
        return self._index[individual_id]

    @property
    def ids(self) -> list[str]:
        return [r.individual_id for r in self.individuals]

    def is_founder(self, i: int) -> bool:
        return self.father[i] < 0

    def proband_indices(self) -> list[int]:
        return [i for i, r in enumerate(self.individuals) if r.is_proband]

    def topological_order(self) -> list[int]:
        """Parents before children; ties broken by row order."""
        n = len(self)
        done = np.zeros(n, dtype=bool)
        order: list[int] = []
        while len(order) < n:
            progressed = False
            for i in range(n):
                if done[i]:
                    continue
                f, m = self.father[i], self.mother[i]
                if (f < 0 or done[f]) and (m < 0 or done[m]):
                    done[i] = True
                    order.append(i)
                    progressed = True
            if not progressed:
                raise AncestryCycle(f"family {self.family_id}: ancestry cycle")
        return order

    def sorted(self) -> "Pedigree":
        """Copy with rows ordered by individual id (for order-free comparison)."""
        return Pedigree(self.family_id, tuple(sorted(self.individuals, key=lambda r: r.individual_id)))


@dataclass(frozen=True)
class Dataset:
    families: tuple[Pedigree, ...]
    covariate_names: tuple[str, ...] = ()

    def __iter__(self):
        return iter(self.families)

    def __len__(self) -> int:
        return len(self.families)

    @property
    def n_individuals(self) -> int:
        return sum(len(f) for f in self.families)

    def individuals(self) -> Iterable[IndividualRecord]:
        for fam in self.families:
            yield from fam.individuals

    def family(self, family_id: str) -> Pedigree:
        for fam in self.families:
            if fam.family_id == family_id:
                return fam
        raise KeyError(family_id)

    def covariate_index(self, name: str) -> int:
        try:
            return self.covariate_names.index(name)
        except ValueError:
            raise KeyError(f"unknown covariate column {name!r}") from None

    def canonical(self) -> "Dataset":
        fams = sorted((f.sorted() for f in self.families), key=lambda f: f.family_id)
        return Dataset(tuple(fams), self.covariate_names)


def diagnose_family(ped: Pedigree, require_proband: bool = False) -> list[Diagnostic]:
    fid = ped.family_id
    out: list[Diagnostic] = []
    seen: set[str] = set()
    for rec in ped.individuals:
        if rec.individual_id in seen:
            out.append(Diagnostic("DuplicateIndividualId", fid, rec.individual_id,
                                  f"individual {rec.individual_id!r} appears more than once"))
        seen.add(rec.individual_id)

    by_id = {r.individual_id: r for r in ped.individuals}
    for rec in ped.individuals:
        if (rec.father_id is None) != (rec.mother_id is None):
            out.append(Diagnostic("SingleParent", fid, rec.individual_id,
                                  f"individual {rec.individual_id!r} has only one parent"))
        for pid, want, role in ((rec.father_id, Sex.MALE, "father"), (rec.mother_id, Sex.FEMALE, "mother")):
            if pid is None:
                continue
            parent = by_id.get(pid)
            if parent is None:
                out.append(Diagnostic("UnknownParent", fid, rec.individual_id,
                                      f"{role} {pid!r} of {rec.individual_id!r} not found"))
            elif parent.sex != want:
                out.append(Diagnostic("SexInconsistentParent", fid, rec.individual_id,
                                      f"{role} {pid!r} of {rec.individual_id!r} has sex {parent.sex.name.lower()}"))
        if not (math.isfinite(rec.age) and rec.age >= 0):
            out.append(Diagnostic("MalformedRow", fid, rec.individual_id, f"invalid age {rec.age!r}"))

    # ancestry cycles: DFS over child -> parent edges
    state: dict[str, int] = {}

    def visit(node: str) -> None:
        state[node] = 1
        rec = by_id[node]
        for pid in (rec.father_id, rec.mother_id):
            if pid is None or pid not in by_id:
                continue
            if state.get(pid) == 1:
                out.append(Diagnostic("AncestryCycle", fid, pid,
                                      f"individual {pid!r} is its own ancestor"))
            elif pid not in state:
                visit(pid)
        state[node] = 2

    for rec in ped.individuals:
        if rec.individual_id not in state:
            visit(rec.individual_id)

    n_prob = sum(r.is_proband for r in ped.individuals)
    if n_prob > 1 or (require_proband and n_prob != 1):
        out.append(Diagnostic("ProbandCount", fid, None, f"family has {n_prob} probands"))
    return out


def validate(ds: Dataset, require_probands: bool = False) -> list[Diagnostic]:
    """All invariant violations in ``ds``; an empty list means valid."""
    out: list[Diagnostic] = []
    seen: set[str] = set()
    ncov = len(ds.covariate_names)
    for fam in ds.families:
        if fam.family_id in seen:
            out.append(Diagnostic("DuplicateFamilyId", fam.family_id, None, "family id repeated"))
        seen.add(fam.family_id)
        out.extend(diagnose_family(fam, require_probands))
        for rec in fam.individuals:
            if len(rec.covariates) != ncov:
                out.append(Diagnostic("MalformedRow", fam.family_id, rec.individual_id,
                                      f"expected {ncov} covariates, got {len(rec.covariates)}"))
    return out


def build_pedigree(family_id: str, records: Sequence[IndividualRecord]) -> Pedigree:
    """Checked construction: raises the first structural problem found."""
    ped = Pedigree(family_id, tuple(records))
    diags = [d for d in diagnose_family(ped) if d.kind != "ProbandCount"]
    if diags:
        raise diags[0].to_error()
    return ped


def _parse_int(tok: str, allowed: Iterable[int], what: str, line: int) -> int:
    try:
        v = int(tok)
    except ValueError:
        raise MalformedRow(f"cannot parse {what} {tok!r}", line) from None
    if v not in allowed:
        raise MalformedRow(f"{what} must be one of {sorted(allowed)}, got {v}", line)
    return v


def _parse_row(toks: list[str], ncov: int, line: int) -> IndividualRecord:
    if len(toks) != len(BASE_COLUMNS) + ncov:
        raise MalformedRow(f"expected {len(BASE_COLUMNS) + ncov} columns, got {len(toks)}", line)
    fid, iid, fa, mo = toks[:4]
    if not fid or not iid or iid == "0":
        raise MalformedRow("empty family or individual id", line)
    sex = Sex(_parse_int(toks[4], (1, 2), "sex", line))
    status = _parse_int(toks[6], (0, 1), "status", line)
    test = GenotypeTest(_parse_int(toks[7], (0, 1, 2), "genotype_test", line))
    proband = _parse_int(toks[8], (0, 1), "proband", line)
    if toks[5] in MISSING_AGE:
        if status or test != GenotypeTest.UNTESTED:
            raise MalformedRow("missing age only allowed for unaffected, untested individuals", line)
        age = 0.0
    else:
        try:
            age = float(toks[5])
        except ValueError:
            raise MalformedRow(f"cannot parse age {toks[5]!r}", line) from None
        if not (math.isfinite(age) and age >= 0):
            raise MalformedRow(f"age must be finite and non-negative, got {toks[5]!r}", line)
    try:
        cov = tuple(float(t) for t in toks[9:])
    except ValueError:
        raise MalformedRow("cannot parse covariate", line) from None
    return IndividualRecord(
        family_id=fid,
        individual_id=iid,
        father_id=None if fa == "0" else fa,
        mother_id=None if mo == "0" else mo,
        sex=sex,
        age=age,
        affected=bool(status),
        genotype_test=test,
        is_proband=bool(proband),
        covariates=cov,
    )


def read_dataset(stream: io.TextIOBase, strict: bool = False, require_probands: bool = False) -> Dataset:
    covariate_names: tuple[str, ...] | None = None
    families: dict[str, list[IndividualRecord]] = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        toks = line.split("\t")
        if line.startswith("#") or toks[0] == "family_id":
            if covariate_names is None and not families:
                toks[0] = toks[0].lstrip("#").strip()
                if toks[: len(BASE_COLUMNS)] == list(BASE_COLUMNS):
                    covariate_names = tuple(toks[len(BASE_COLUMNS):])
            continue
        if covariate_names is None:
            covariate_names = tuple(f"cov{j + 1}" for j in range(max(0, len(toks) - len(BASE_COLUMNS))))
        rec = _parse_row(toks, len(covariate_names), lineno)
        families.setdefault(rec.family_id, []).append(rec)

    peds = tuple(build_pedigree(fid, recs) for fid, recs in families.items())
    ds = Dataset(peds, covariate_names or ())
    if strict or require_probands:
        diags = validate(ds, require_probands=require_probands)
        if diags:
            raise diags[0].to_error()
    return ds


def parse_dataset(path: str | os.PathLike, strict: bool = False, require_probands: bool = False) -> Dataset:
    """Read and validate a pedigree TSV file.

    Structural errors (unknown parents, sex-inconsistent parents, ancestry
    cycles, duplicate ids, malformed rows) always raise. With ``strict`` every
    diagnostic from :func:`validate` becomes an error as well.
    """
    with open(path, encoding="utf-8") as fh:
        return read_dataset(fh, strict=strict, require_probands=require_probands)


def _fmt_num(x: float) -> str:
    return repr(float(x)) if not float(x).is_integer() else str(int(x))


def format_dataset(ds: Dataset) -> str:
    buf = io.StringIO()
    buf.write("\t".join(BASE_COLUMNS + tuple(ds.covariate_names)) + "\n")
    for rec in ds.individuals():
        row = [
            rec.family_id,
            rec.individual_id,
            rec.father_id or "0",
            rec.mother_id or "0",
            str(int(rec.sex)),
            _fmt_num(rec.age),
            "1" if rec.affected else "0",
            str(int(rec.genotype_test)),
            "1" if rec.is_proband else "0",
        ] + [_fmt_num(c) for c in rec.covariates]
        buf.write("\t".join(row) + "\n")
    return buf.getvalue()


def write_dataset(ds: Dataset, path: str | os.PathLike) -> None:
    from .io import atomic_write_text

    atomic_write_text(Path(path), format_dataset(ds))


def add_sex_indicator(ds: Dataset, name: str = "female") -> Dataset:
    """Append a 0/1 female indicator covariate column (no-op if present)."""
    if name in ds.covariate_names:
        return ds
    fams = []
    for fam in ds.families:
        recs = tuple(
            replace(r, covariates=r.covariates + (1.0 if r.sex == Sex.FEMALE else 0.0,))
            for r in fam.individuals
        )
        fams.append(Pedigree(fam.family_id, recs))
    return Dataset(tuple(fams), ds.covariate_names + (name,))

