"""JSON problem files.

A file holds one problem::

    {
      "schema_version": 1,
      "n": 2, "m": 1, "r": 2, "alpha": 0.0,
      "F": [[0, 1], [0, 0]], "G": [[0], [1]], "Q": ..., "R": ..., "S": ...,
      "C": [[[...]], ...], "D": [[[...]], ...],
      "degree_cap": 6,
      "terms": [{"block": "f", "component": 1, "degree": 3,
                 "records": [{"exponents": [3, 0, 0], "coeff": -1.45}]}, ...],
      "terminal": {"T": 30.0, "P_T": [[...]], "pi_T3": [{"exponents": ..., "coeff": ...}]},
      "time_table": [{"t": 0.0, "F": ...}, {"t": 1.0, "F": ...}]
    }

Matrices are nested row lists.  Higher-degree term records have exponents
over the concatenated (x, u) variables; ``gamma`` blocks also carry a
``channel``.  Time-table nodes may override any of F, G, Q, R, S, C, D and
alpha; the remaining entries come from the top level.  Floats are written
with ``repr`` precision, so load(dump(p)) reproduces p exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AlbrekhtError
from .hjb import NonlinearProblem
from .lqr import AREData
from .poly import DEGREE_CAP, HomPoly, PolySeries
from .sare import LQGBData
from .sdre import TableSampler, TimeVaryingProblem

SCHEMA_VERSION = 1
MATRIX_FIELDS = ("F", "G", "Q", "R", "S")


class ProblemFileError(AlbrekhtError, ValueError):
    """Malformed problem file; the message names the offending field or line."""


@dataclass(frozen=True, eq=False)
class ProblemBundle:
    """Everything a problem file can describe."""

    problem: NonlinearProblem
    horizon: float | None = None
    P_T: np.ndarray | None = None
    pi_T3: HomPoly | None = None
    table_times: tuple[float, ...] = ()
    table_problems: tuple[NonlinearProblem, ...] = ()

    @property
    def lin(self) -> LQGBData:
        return self.problem.lin

    def time_varying(self, horizon: float | None = None) -> TimeVaryingProblem:
        T = horizon if horizon is not None else self.horizon
        if T is None:
            raise ProblemFileError("terminal.T: horizon missing; give it in the file or on the command line")
        P_T = self.P_T if self.P_T is not None else np.zeros((self.problem.n, self.problem.n))
        if self.table_times:
            sampler = TableSampler(self.table_times, self.table_problems)
            return TimeVaryingProblem(sampler, T, P_T, self.pi_T3)
        return TimeVaryingProblem.constant(self.problem, T, P_T, self.pi_T3)


def _matrix(value, shape, where):
    try:
        a = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProblemFileError(f"{where}: not a numeric matrix ({exc})") from None
    if a.size == 0 and 0 in shape:
        return np.zeros(shape)
    if a.shape != shape:
        raise ProblemFileError(f"{where}: expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ProblemFileError(f"{where}: non-finite entry")
    return a


def _require(d, key, where=""):
    if key not in d:
        raise ProblemFileError(f"{where}{key}: required field missing")
    return d[key]


def _int_field(d, key, where=""):
    v = _require(d, key, where)
    if not isinstance(v, int) or isinstance(v, bool) or v < 0:
        raise ProblemFileError(f"{where}{key}: expected a nonnegative integer, got {v!r}")
    return v


def _lin_from(d, n, m, r, where="", fallback=None):
    get = lambda k: d[k] if k in d else (fallback[k] if fallback and k in fallback else None)
    mats = {}
    for name, shape in (("F", (n, n)), ("G", (n, m)), ("Q", (n, n)), ("R", (m, m)), ("S", (n, m))):
        val = get(name)
        if val is None:
            if name == "S":
                mats[name] = np.zeros(shape)
                continue
            raise ProblemFileError(f"{where}{name}: required field missing")
        mats[name] = _matrix(val, shape, f"{where}{name}")
    noise = {}
    for name, shape in (("C", (n, n)), ("D", (n, m))):
        val = get(name)
        val = [] if val is None else val
        if r and not val:
            noise[name] = [np.zeros(shape) for _ in range(r)]
            continue
        if len(val) != r:
            raise ProblemFileError(f"{where}{name}: expected {r} matrices, got {len(val)}")
        noise[name] = [_matrix(v, shape, f"{where}{name}[{k}]") for k, v in enumerate(val)]
    alpha = get("alpha")
    alpha = 0.0 if alpha is None else alpha
    try:
        base = AREData(mats["F"], mats["G"], mats["Q"], mats["R"], mats["S"], float(alpha))
        return LQGBData(base, noise["C"], noise["D"])
    except (ValueError, AlbrekhtError) as exc:
        raise ProblemFileError(f"{where or 'problem'}: {exc}") from None


def _terms_from(d, n, m, r, cap):
    nz = n + m
    f = [dict() for _ in range(n)]
    gamma = [[dict() for _ in range(n)] for _ in range(r)]
    l: dict = {}
    for idx, block in enumerate(d.get("terms", [])):
        where = f"terms[{idx}]."
        kind = _require(block, "block", where)
        degree = _int_field(block, "degree", where)
        records = _require(block, "records", where)
        for j, rec in enumerate(records):
            e = _require(rec, "exponents", f"{where}records[{j}].")
            if len(e) != nz or sum(e) != degree or any(not isinstance(k, int) or k < 0 for k in e):
                raise ProblemFileError(f"{where}records[{j}].exponents: {e!r} is not a degree-{degree} monomial in {nz} variables")
            _require(rec, "coeff", f"{where}records[{j}].")
        hom = HomPoly.from_records(nz, degree, records)
        if kind == "l":
            target = l
        elif kind in ("f", "gamma"):
            comp = _int_field(block, "component", where)
            if comp >= n:
                raise ProblemFileError(f"{where}component: {comp} out of range for n={n}")
            if kind == "f":
                target = f[comp]
            else:
                ch = _int_field(block, "channel", where)
                if ch >= r:
                    raise ProblemFileError(f"{where}channel: {ch} out of range for r={r}")
                target = gamma[ch][comp]
        else:
            raise ProblemFileError(f"{where}block: expected 'f', 'gamma' or 'l', got {kind!r}")
        target[degree] = target[degree] + hom if degree in target else hom
    series = lambda homs: PolySeries.from_homs(nz, homs.values())
    return [series(s) for s in f], [[series(s) for s in g] for g in gamma], series(l)


def parse_problem(data: dict) -> ProblemBundle:
    """Build a :class:`ProblemBundle` from a decoded problem file."""
    if not isinstance(data, dict):
        raise ProblemFileError("top level: expected a JSON object")
    version = _require(data, "schema_version")
    if version != SCHEMA_VERSION:
        raise ProblemFileError(f"schema_version: unsupported version {version!r} (this build reads {SCHEMA_VERSION})")
    n, m, r = (_int_field(data, k) for k in ("n", "m", "r"))
    if n == 0 or m == 0:
        raise ProblemFileError("n, m: state and control dimensions must be positive")
    cap = data.get("degree_cap", DEGREE_CAP)
    if not isinstance(cap, int) or cap < 2:
        raise ProblemFileError(f"degree_cap: expected an integer >= 2, got {cap!r}")
    lin = _lin_from(data, n, m, r)
    f, gamma, l = _terms_from(data, n, m, r, cap)
    try:
        problem = NonlinearProblem(lin, f, gamma, l, cap)
    except (ValueError, AlbrekhtError) as exc:
        raise ProblemFileError(f"terms: {exc}") from None

    horizon = P_T = pi_T3 = None
    term = data.get("terminal")
    if term is not None:
        if "T" in term:
            horizon = float(term["T"])
            if not horizon > 0:
                raise ProblemFileError("terminal.T: horizon must be positive")
        if "P_T" in term:
            P_T = _matrix(term["P_T"], (n, n), "terminal.P_T")
        if "pi_T3" in term:
            pi_T3 = HomPoly.from_records(n, 3, term["pi_T3"])

    times, probs = [], []
    for i, node in enumerate(data.get("time_table", [])):
        where = f"time_table[{i}]."
        times.append(float(_require(node, "t", where)))
        probs.append(problem.with_lin(_lin_from(node, n, m, r, where, fallback=data)))
    if times and any(b <= a for a, b in zip(times, times[1:])):
        raise ProblemFileError("time_table: node times must be strictly increasing")
    return ProblemBundle(problem, horizon, P_T, pi_T3, tuple(times), tuple(probs))


def load_problem(path) -> ProblemBundle:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_problem(data)


def _lin_fields(lin: LQGBData) -> dict:
    b = lin.base
    out = {k: getattr(b, k).tolist() for k in MATRIX_FIELDS}
    out["alpha"] = b.alpha
    out["C"] = [c.tolist() for c in lin.C]
    out["D"] = [d.tolist() for d in lin.D]
    return out


def dump_problem(bundle: ProblemBundle | NonlinearProblem | LQGBData) -> dict:
    """Inverse of :func:`parse_problem`."""
    if isinstance(bundle, LQGBData):
        bundle = ProblemBundle(NonlinearProblem(bundle))
    elif isinstance(bundle, NonlinearProblem):
        bundle = ProblemBundle(bundle)
    p = bundle.problem
    out = {"schema_version": SCHEMA_VERSION, "n": p.n, "m": p.m, "r": p.r}
    out.update(_lin_fields(p.lin))
    out["degree_cap"] = p.degree_cap
    terms = []
    for i, s in enumerate(p.f_hi):
        for d, h in s.terms.items():
            if not h.is_zero():
                terms.append({"block": "f", "component": i, "degree": d, "records": h.to_records()})
    for k, g in enumerate(p.gamma_hi):
        for i, s in enumerate(g):
            for d, h in s.terms.items():
                if not h.is_zero():
                    terms.append({"block": "gamma", "channel": k, "component": i, "degree": d, "records": h.to_records()})
    for d, h in p.l_hi.terms.items():
        if not h.is_zero():
            terms.append({"block": "l", "degree": d, "records": h.to_records()})
    out["terms"] = terms
    term = {}
    if bundle.horizon is not None:
        term["T"] = bundle.horizon
    if bundle.P_T is not None:
        term["P_T"] = np.asarray(bundle.P_T).tolist()
    if bundle.pi_T3 is not None:
        term["pi_T3"] = bundle.pi_T3.to_records()
    if term:
        out["terminal"] = term
    if bundle.table_times:
        out["time_table"] = [dict(t=t, **_lin_fields(q.lin)) for t, q in zip(bundle.table_times, bundle.table_problems)]
    return out


def save_problem(bundle, path) -> None:
    Path(path).write_text(json.dumps(dump_problem(bundle), indent=1) + "\n")
