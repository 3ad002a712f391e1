"""Compact text language for structural equation models.

Statements, one per line or separated by ``;``:

    F1 =~ X1 + X2 + X3     factor loadings
    Y ~ X1 + X2            regressions (latent or manifest on either side)
    X1 ~~ X2               covariance; X1 ~~ X1 is a variance
    X1 ~ 1                 intercept (enables the mean structure)

A term may carry a premultiplied modifier: ``0.9*X1`` fixes the value,
``NA*X1`` forces the parameter free.  ``#`` starts a comment.  The first
listed loading of each factor is fixed to 1 unless it carries an explicit
modifier.  Residual variances for every variable and covariances among
exogenous latents are added automatically unless stated.

Manifest variables are ordered by natural sort of their names; latents by
first appearance.  Free parameters are enumerated in source order with
the automatic additions appended, which fixes the meaning of a parameter
vector once and for all.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

__all__ = ["ModelError", "Pattern", "ParamEntry", "FixedEntry", "ModelSpec", "parse_model", "param_count"]

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*\Z")
_NUMBER_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?\Z")
# split additive terms, but leave exponent signs like 1e+2 alone
_TERM_SPLIT_RE = re.compile(r"(?<![eE])\+")

_LOADING_START = 1.0
_PATH_START = 0.0
_VARIANCE_START = 1.0
_COVARIANCE_START = 0.0
_INTERCEPT_START = 0.0


class ModelError(ValueError):
    """Problem in model text; carries the source line when known."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", col {col}" if col is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.col = col


@dataclass(frozen=True, eq=False)
class Pattern:
    """Parallel arrays describing one model matrix.

    ``fixed`` holds the fixed cell values; ``free`` holds the index of the
    free parameter occupying the cell, or -1 where the cell is fixed.
    """

    fixed: np.ndarray
    free: np.ndarray


@dataclass(frozen=True)
class ParamEntry:
    name: str
    matrix: str  # lambda | beta | psi | nu_alpha
    row: int
    col: int
    start: float
    lower: float
    seq: int


@dataclass(frozen=True)
class FixedEntry:
    name: str
    matrix: str
    row: int
    col: int
    value: float
    seq: int


def _natural_key(name: str):
    return tuple(int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", name))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Validated symbolic model with an enumerated free-parameter vector."""

    manifest_names: tuple[str, ...]
    latent_names: tuple[str, ...]
    lam: Pattern
    beta: Pattern
    psi: Pattern
    nu_alpha: Pattern
    param_table: tuple[ParamEntry, ...]
    fixed_table: tuple[FixedEntry, ...]
    meanstructure: bool

    @property
    def p(self) -> int:
        return len(self.manifest_names)

    @property
    def m(self) -> int:
        return len(self.latent_names)

    @property
    def t(self) -> int:
        return self.p + self.m

    @property
    def var_names(self) -> tuple[str, ...]:
        return self.manifest_names + self.latent_names

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.param_table)

    @property
    def start_values(self) -> np.ndarray:
        return np.array([e.start for e in self.param_table], dtype=float)

    @property
    def lower_bounds(self) -> np.ndarray:
        return np.array([e.lower for e in self.param_table], dtype=float)

    def to_text(self) -> str:
        """Canonical source reproducing this spec (see parse round-trip)."""
        entries: list[tuple[int, str, str, str, float | None]] = []
        names = self.var_names
        first_loading_seq: dict[int, int] = {}
        for e in self.param_table:
            if e.matrix == "lambda" and e.col not in first_loading_seq:
                first_loading_seq[e.col] = min(first_loading_seq.get(e.col, e.seq), e.seq)
        for f in self.fixed_table:
            if f.matrix == "lambda":
                prev = first_loading_seq.get(f.col)
                first_loading_seq[f.col] = f.seq if prev is None else min(prev, f.seq)

        for e in self.param_table:
            if e.matrix == "lambda":
                term = ("NA*" if e.seq == first_loading_seq[e.col] else "") + names[e.row]
                entries.append((e.seq, "=~", self.latent_names[e.col], term, None))
            elif e.matrix == "beta":
                entries.append((e.seq, "~", names[e.row], names[e.col], None))
            elif e.matrix == "psi":
                entries.append((e.seq, "~~", names[e.row], names[e.col], None))
            else:
                entries.append((e.seq, "~", names[e.row], "1", None))
        for f in self.fixed_table:
            if f.matrix == "lambda":
                entries.append((f.seq, "=~", self.latent_names[f.col], f"{f.value!r}*{names[f.row]}", None))
            elif f.matrix == "beta":
                entries.append((f.seq, "~", names[f.row], f"{f.value!r}*{names[f.col]}", None))
            elif f.matrix == "psi":
                entries.append((f.seq, "~~", names[f.row], f"{f.value!r}*{names[f.col]}", None))
            else:
                entries.append((f.seq, "~", names[f.row], f"{f.value!r}*1", None))

        entries.sort(key=lambda item: item[0])
        lines: list[str] = []
        for _, op, lhs, term, _ in entries:
            if op == "=~" and lines and lines[-1].startswith(f"{lhs} =~ "):
                lines[-1] += f" + {term}"
            else:
                lines.append(f"{lhs} {'=~' if op == '=~' else op} {term}")
        return "\n".join(lines) + "\n"


@dataclass
class _RawEntry:
    matrix: str
    row: int
    col: int
    name: str
    value: float | None  # None = free
    seq: int
    line: int


class _Parser:
    def __init__(self, text: str, meanstructure: bool | None):
        self.text = text
        self.meanstructure = meanstructure
        self.statements: list[tuple[int, int, str, str, str]] = []  # line, col, lhs, op, rhs

    def parse(self) -> ModelSpec:
        self._split_statements()
        if not self.statements:
            raise ModelError("model text contains no statements")
        latents = self._collect_latents()
        manifests = self._collect_manifests(latents)
        return self._build(manifests, latents)

    # -- statement scanning ------------------------------------------------

    def _split_statements(self) -> None:
        for lineno, raw in enumerate(self.text.splitlines(), start=1):
            line = raw.split("#", 1)[0]
            offset = 0
            for segment in line.split(";"):
                stripped = segment.strip()
                if stripped:
                    col = offset + segment.index(stripped[0]) + 1
                    self._scan_statement(lineno, col, stripped)
                offset += len(segment) + 1

    def _scan_statement(self, lineno: int, col: int, stmt: str) -> None:
        for op in ("=~", "~~", "~"):
            pos = stmt.find(op)
            if pos >= 0:
                lhs = stmt[:pos].strip()
                rhs = stmt[pos + len(op):].strip()
                if not lhs or not rhs:
                    raise ModelError(f"missing side of '{op}' statement", lineno, col)
                if not _NAME_RE.match(lhs):
                    raise ModelError(f"invalid identifier {lhs!r}", lineno, col)
                self.statements.append((lineno, col + pos, lhs, op, rhs))
                return
        raise ModelError(f"no operator found in statement {stmt!r}", lineno, col)

    def _terms(self, rhs: str, lineno: int) -> list[tuple[str | None, str]]:
        """Split an rhs into (modifier, target) pairs; modifier 'NA' or a number string."""
        out = []
        for piece in _TERM_SPLIT_RE.split(rhs):
            piece = piece.strip()
            if not piece:
                raise ModelError("empty term in statement", lineno)
            if "*" in piece:
                mod, _, target = piece.partition("*")
                mod = mod.strip()
                target = target.strip()
                if mod != "NA" and not _NUMBER_RE.match(mod):
                    raise ModelError(f"invalid modifier {mod!r}", lineno)
            else:
                mod, target = None, piece
            if target != "1" and not _NAME_RE.match(target):
                raise ModelError(f"invalid identifier {target!r}", lineno)
            out.append((mod, target))
        return out

    # -- name collection ---------------------------------------------------

    def _collect_latents(self) -> list[str]:
        latents: list[str] = []
        for _, _, lhs, op, _ in self.statements:
            if op == "=~" and lhs not in latents:
                latents.append(lhs)
        return latents

    def _collect_manifests(self, latents: list[str]) -> list[str]:
        seen: list[str] = []
        for lineno, _, lhs, op, rhs in self.statements:
            names = [] if lhs in latents else [lhs]
            for mod, target in self._terms(rhs, lineno):
                if target == "1":
                    continue
                if target not in latents:
                    names.append(target)
            for nm in names:
                if nm not in seen:
                    seen.append(nm)
        return sorted(seen, key=_natural_key)

    # -- assembly ----------------------------------------------------------

    def _build(self, manifests: list[str], latents: list[str]) -> ModelSpec:
        p, m = len(manifests), len(latents)
        t = p + m
        var_index = {nm: i for i, nm in enumerate(manifests + latents)}
        latent_index = {nm: j for j, nm in enumerate(latents)}
        is_latent = {nm: nm in latent_index for nm in var_index}

        raw: list[_RawEntry] = []
        locations: set[tuple[str, int, int]] = set()
        factor_has_loading: set[str] = set()
        regression_lhs: set[str] = set()
        has_intercepts = False
        seq = 0

        def add(matrix: str, row: int, col: int, name: str, value: float | None, lineno: int) -> None:
            nonlocal seq
            key = (matrix, min(row, col), max(row, col)) if matrix == "psi" else (matrix, row, col)
            if key in locations:
                raise ModelError(f"duplicate definition of {name!r}", lineno)
            locations.add(key)
            raw.append(_RawEntry(matrix, row, col, name, value, seq, lineno))
            seq += 1

        for lineno, col, lhs, op, rhs in self.statements:
            terms = self._terms(rhs, lineno)
            if op == "=~":
                for mod, target in terms:
                    if target == "1":
                        raise ModelError("'1' is not a valid indicator", lineno)
                    if is_latent[target]:
                        raise ModelError(
                            f"latent variable {target!r} cannot serve as an indicator", lineno
                        )
                    value = self._modifier_value(mod)
                    if mod is None and lhs not in factor_has_loading:
                        value = 1.0  # identification: first loading is the marker
                    factor_has_loading.add(lhs)
                    add("lambda", var_index[target], latent_index[lhs], f"{lhs}=~{target}", value, lineno)
            elif op == "~":
                for mod, target in terms:
                    if target == "1":
                        has_intercepts = True
                        if self.meanstructure is False:
                            raise ModelError(
                                "intercept statement requires the mean structure", lineno
                            )
                        add("nu_alpha", var_index[lhs], 0, f"{lhs}~1", self._modifier_value(mod), lineno)
                        continue
                    if target == lhs:
                        raise ModelError(f"variable {lhs!r} cannot be regressed on itself", lineno)
                    regression_lhs.add(lhs)
                    value = self._modifier_value(mod)
                    if not is_latent[lhs] and is_latent[target]:
                        # manifest-on-latent regression is a loading under another name
                        add("lambda", var_index[lhs], latent_index[target], f"{lhs}~{target}", value, lineno)
                        factor_has_loading.add(target)
                    else:
                        add("beta", var_index[lhs], var_index[target], f"{lhs}~{target}", value, lineno)
            else:  # ~~
                for mod, target in terms:
                    if target == "1":
                        raise ModelError("'1' is not valid in a covariance statement", lineno)
                    add("psi", var_index[lhs], var_index[target], f"{lhs}~~{target}", self._modifier_value(mod), lineno)

        meanstructure = bool(self.meanstructure) or (self.meanstructure is None and has_intercepts)

        # automatic additions, in a fixed documented order
        def present(matrix: str, row: int, col: int) -> bool:
            key = (matrix, min(row, col), max(row, col)) if matrix == "psi" else (matrix, row, col)
            return key in locations

        for nm in manifests + latents:
            i = var_index[nm]
            if not present("psi", i, i):
                add("psi", i, i, f"{nm}~~{nm}", None, 0)
        exog_latents = [nm for nm in latents if nm not in regression_lhs]
        for a in range(len(exog_latents)):
            for b in range(a + 1, len(exog_latents)):
                i, j = var_index[exog_latents[a]], var_index[exog_latents[b]]
                if not present("psi", i, j):
                    add("psi", i, j, f"{exog_latents[a]}~~{exog_latents[b]}", None, 0)
        if meanstructure:
            for nm in manifests:
                i = var_index[nm]
                if not present("nu_alpha", i, 0):
                    add("nu_alpha", i, 0, f"{nm}~1", None, 0)

        return self._finalize(raw, manifests, latents, meanstructure)

    @staticmethod
    def _modifier_value(mod: str | None) -> float | None:
        if mod is None or mod == "NA":
            return None
        return float(mod)

    def _finalize(
        self, raw: list[_RawEntry], manifests: list[str], latents: list[str], meanstructure: bool
    ) -> ModelSpec:
        p, m = len(manifests), len(latents)
        t = p + m
        lam = Pattern(np.zeros((p, m)), np.full((p, m), -1, dtype=int))
        beta = Pattern(np.zeros((t, t)), np.full((t, t), -1, dtype=int))
        psi = Pattern(np.zeros((t, t)), np.full((t, t), -1, dtype=int))
        nu = Pattern(np.zeros(t), np.full(t, -1, dtype=int))
        patterns = {"lambda": lam, "beta": beta, "psi": psi, "nu_alpha": nu}

        params: list[ParamEntry] = []
        fixed: list[FixedEntry] = []
        for e in raw:
            pat = patterns[e.matrix]
            if e.value is None:
                idx = len(params)
                start, lower = self._defaults(e)
                params.append(ParamEntry(e.name, e.matrix, e.row, e.col, start, lower, e.seq))
                self._set(pat, e, free_index=idx)
            else:
                fixed.append(FixedEntry(e.name, e.matrix, e.row, e.col, e.value, e.seq))
                self._set(pat, e, value=e.value)

        for arr in (lam.fixed, lam.free, beta.fixed, beta.free, psi.fixed, psi.free, nu.fixed, nu.free):
            arr.setflags(write=False)

        spec = ModelSpec(
            manifest_names=tuple(manifests),
            latent_names=tuple(latents),
            lam=lam,
            beta=beta,
            psi=psi,
            nu_alpha=nu,
            param_table=tuple(params),
            fixed_table=tuple(fixed),
            meanstructure=meanstructure,
        )
        self._check_invertible(spec)
        return spec

    @staticmethod
    def _set(pat: Pattern, e: _RawEntry, free_index: int | None = None, value: float = 0.0) -> None:
        cells = [(e.row, e.col)]
        if e.matrix == "psi" and e.row != e.col:
            cells.append((e.col, e.row))
        for r, c in cells:
            if e.matrix == "nu_alpha":
                loc: tuple = (r,)
            else:
                loc = (r, c)
            if free_index is not None:
                pat.free[loc] = free_index
            else:
                pat.fixed[loc] = value

    @staticmethod
    def _defaults(e: _RawEntry) -> tuple[float, float]:
        if e.matrix == "lambda":
            return _LOADING_START, -np.inf
        if e.matrix == "beta":
            return _PATH_START, -np.inf
        if e.matrix == "nu_alpha":
            return _INTERCEPT_START, -np.inf
        if e.row == e.col:
            return _VARIANCE_START, 0.0
        return _COVARIANCE_START, -np.inf

    @staticmethod
    def _check_invertible(spec: ModelSpec) -> None:
        a = np.zeros((spec.t, spec.t))
        a[: spec.p, spec.p:] = np.where(spec.lam.free >= 0, _LOADING_START, spec.lam.fixed)
        a += np.where(spec.beta.free >= 0, _PATH_START, spec.beta.fixed)
        eye_minus = np.eye(spec.t) - a
        if abs(np.linalg.det(eye_minus)) < 1e-12 or np.linalg.cond(eye_minus) > 1e12:
            raise ModelError("fixed path structure makes I - B singular at start values")


def parse_model(text: str, meanstructure: bool | None = None) -> ModelSpec:
    """Parse model-language source into a :class:`ModelSpec`.

    ``meanstructure=None`` enables the mean structure only when the text
    contains an intercept statement; ``True`` additionally frees an
    intercept for every manifest variable; ``False`` rejects intercept
    statements.
    """
    if not text or not text.strip():
        raise ModelError("model text is empty")
    return _Parser(text, meanstructure).parse()


def param_count(spec: ModelSpec) -> int:
    """Number of free parameters k."""
    return len(spec.param_table)
