"""LP-format and fixed-MPS serialisation of :class:`MilpModel`.

Dialect choices (both writers are deterministic; output depends only on the
model, in declaration order):

* LP files follow the CPLEX LP dialect: ``Minimize``/``Maximize`` header,
  one ``Subject To`` row per constraint, indicator rows as
  ``name: b = 1 -> expr <= rhs``, ``Bounds`` listing only non-default bounds,
  ``Binaries``/``Generals`` and an ``SOS`` section with ``S2::`` sets.
* MPS files use the fixed column layout with generated 8-character names
  (``C0000012`` for column 12, ``R0000003`` for row 3, ``S0000000`` for SOS
  set 0) so that strict fixed-format readers accept them.  The objective is
  always written as a minimisation; a maximisation model is negated and the
  header comment records it.  Integers are bracketed by ``MARKER`` lines,
  bounds are written in variable order as LO/UP/FX/FR/MI, and SOS2 sets use
  the ``S2 SOS`` section understood by CBC and SCIP.  Indicator constraints
  have no portable MPS form and are rejected.
"""
from __future__ import annotations

import math

import numpy as np

from .model import MilpModel, ModelError

_SENSE_LP = {"<": "<=", ">": ">=", "=": "="}
_SENSE_MPS = {"<": "L", ">": "G", "=": "E"}
TERMS_PER_LINE = 6


def _num(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return f"{v:.17g}"


def _expr(cols, coeffs, names) -> list[str]:
    terms = []
    for c, a in zip(cols, coeffs):
        a = float(a)
        if a == 0.0:
            continue
        sign = "-" if a < 0 else "+"
        mag = abs(a)
        coef = "" if mag == 1.0 else _num(mag) + " "
        terms.append(f"{sign} {coef}{names[c]}")
    if terms and terms[0].startswith("+ "):
        terms[0] = terms[0][2:]
    return terms


def _wrap(prefix: str, terms: list[str], suffix: str = "") -> list[str]:
    lines = []
    for k in range(0, len(terms), TERMS_PER_LINE):
        chunk = " ".join(terms[k:k + TERMS_PER_LINE])
        lines.append((prefix if k == 0 else "   ") + chunk)
    lines[-1] += suffix
    return lines


def write_lp(model: MilpModel) -> bytes:
    model.validate()
    names = model.var_names
    A = model.A.tocsr()
    out = [f"\\ Problem name: {model.name}", "Maximize" if model.sense == "max" else "Minimize"]
    nz = np.flatnonzero(model.obj)
    obj_terms = _expr(nz, model.obj[nz], names)
    if not obj_terms:
        obj_terms = [f"0 {names[0]}"] if names else []
    out += _wrap(" obj: ", obj_terms)
    out.append("Subject To")
    for r in range(model.num_rows):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        terms = _expr(A.indices[lo:hi], A.data[lo:hi], names)
        if not terms:
            terms = [f"0 {names[0]}"]
        out += _wrap(f" {model.row_names[r]}: ", terms,
                     f" {_SENSE_LP[model.row_sense[r]]} {_num(model.rhs[r])}")
    for ind in model.indicators:
        terms = _expr(ind.cols, ind.coeffs, names) or [f"0 {names[ind.binary]}"]
        out += _wrap(f" {ind.name}: {names[ind.binary]} = {ind.active} -> ", terms,
                     f" {_SENSE_LP[ind.sense]} {_num(ind.rhs)}")
    out.append("Bounds")
    for j in range(model.num_vars):
        if model.vtype[j] == "B":
            continue
        lo, hi = model.lb[j], model.ub[j]
        nm = names[j]
        if lo == -math.inf and hi == math.inf:
            out.append(f" {nm} free")
        elif lo == hi:
            out.append(f" {nm} = {_num(lo)}")
        elif lo == 0.0 and hi == math.inf:
            continue
        elif hi == math.inf:
            out.append(f" {nm} >= {_num(lo)}")
        elif lo == -math.inf:
            out.append(f" -inf <= {nm} <= {_num(hi)}")
        else:
            out.append(f" {_num(lo)} <= {nm} <= {_num(hi)}")
    binaries = [names[j] for j in range(model.num_vars) if model.vtype[j] == "B"]
    generals = [names[j] for j in range(model.num_vars) if model.vtype[j] == "I"]
    if binaries:
        out.append("Binaries")
        out += [" " + " ".join(binaries[k:k + 8]) for k in range(0, len(binaries), 8)]
    if generals:
        out.append("Generals")
        out += [" " + " ".join(generals[k:k + 8]) for k in range(0, len(generals), 8)]
    if model.sos2:
        out.append("SOS")
        for sos in model.sos2:
            members = [f"{names[c]}:{_num(w)}" for c, w in zip(sos.members, sos.weights)]
            out += _wrap(f" {sos.name}: S2:: ", members)
    out.append("End")
    return ("\n".join(out) + "\n").encode("ascii")


def mps_col(j: int) -> str:
    return f"C{j:07d}"


def mps_row(r: int) -> str:
    return f"R{r:07d}"


def _fixed(code: str, *fields: str) -> str:
    line = " " + code.ljust(2) + " "
    starts = (4, 14, 24, 39, 49)
    for pos, text in zip(starts, fields):
        line = line.ljust(pos) + text
    return line.rstrip()


def write_mps(model: MilpModel) -> bytes:
    model.validate()
    if model.indicators:
        raise ModelError("indicator constraints cannot be written to MPS; use the big-M encoding")
    if model.num_vars >= 10**7 or model.num_rows >= 10**7:
        raise ModelError("model too large for fixed-format MPS names")
    sign = -1.0 if model.sense == "max" else 1.0
    A = model.A.tocsc()
    out = [f"* {model.name} ({'negated maximisation' if sign < 0 else 'minimisation'})",
           "NAME          " + model.name[:8].upper(), "ROWS", " N  OBJ"]
    for r in range(model.num_rows):
        out.append(f" {_SENSE_MPS[model.row_sense[r]]}  {mps_row(r)}")
    out.append("COLUMNS")
    in_int = False
    marker = 0
    for j in range(model.num_vars):
        integral = model.vtype[j] != "C"
        if integral != in_int:
            kind = "'INTORG'" if integral else "'INTEND'"
            out.append(_fixed("", f"M{marker:07d}", "'MARKER'", "", kind))
            marker += 1
            in_int = integral
        col = mps_col(j)
        c = sign * model.obj[j]
        wrote = False
        if c != 0.0:
            out.append(_fixed("", col, "OBJ", _num(c)))
            wrote = True
        lo, hi = A.indptr[j], A.indptr[j + 1]
        for r, a in zip(A.indices[lo:hi], A.data[lo:hi]):
            if a != 0.0:
                out.append(_fixed("", col, mps_row(r), _num(a)))
                wrote = True
        if not wrote:
            out.append(_fixed("", col, "OBJ", "0"))
    if in_int:
        out.append(_fixed("", f"M{marker:07d}", "'MARKER'", "", "'INTEND'"))
    out.append("RHS")
    for r in range(model.num_rows):
        if model.rhs[r] != 0.0:
            out.append(_fixed("", "RHS", mps_row(r), _num(model.rhs[r])))
    out.append("BOUNDS")
    for j in range(model.num_vars):
        col = mps_col(j)
        lo, hi = model.lb[j], model.ub[j]
        if model.vtype[j] == "B":
            lo, hi = max(lo, 0.0), min(hi, 1.0)
        if lo == -math.inf and hi == math.inf:
            out.append(_fixed("FR", "BND", col))
            continue
        if lo == hi:
            out.append(_fixed("FX", "BND", col, _num(lo)))
            continue
        if lo == -math.inf:
            out.append(_fixed("MI", "BND", col))
        elif lo != 0.0 or model.vtype[j] != "C":
            out.append(_fixed("LO", "BND", col, _num(lo)))
        if hi != math.inf:
            out.append(_fixed("UP", "BND", col, _num(hi)))
        elif model.vtype[j] == "I":
            out.append(_fixed("PL", "BND", col))
    if model.sos2:
        out.append("SOS")
        for k, sos in enumerate(model.sos2):
            out.append(_fixed("S2", "SOS", f"S{k:07d}", "1"))
            for c, w in zip(sos.members, sos.weights):
                out.append(_fixed("", mps_col(int(c)), _num(w)))
    out.append("ENDATA")
    return ("\n".join(out) + "\n").encode("ascii")


def write_model(model: MilpModel, fmt: str = "lp_text") -> bytes:
    if fmt in ("lp", "lp_text"):
        return write_lp(model)
    if fmt == "mps":
        return write_mps(model)
    raise ModelError(f"unknown model format {fmt!r}")
