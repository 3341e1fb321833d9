"""Covariate-shift evaluation: structural subgroups, weighted tilts, weighted metrics.

Shifts are defined on Z = (Z1, Z2), the first two continuous covariates
z-scored against a reference sample (n - 1 standard deviation). Subgroup
shifts produce indicator weights divided by subgroup mass; tilts are
exponentiated scores clipped to [0.1, 10] and rescaled to mean one.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .baselines import lower_quantile
from .dataset import Dataset
from .errors import ConfigError, DataError
from .metrics import EvalReport, evaluate
from .partitions import BucketSpec
from .scores import ScoreKind

SUBGROUPS = ("interaction_reg", "interaction_neg", "hard_region", "group")
TILTS = ("curvature_tilt", "hard_mixed_tilt", "local_bump", "custom")
SHIFT_KINDS = SUBGROUPS + TILTS


@dataclass(frozen=True)
class ShiftSpec:
    kind: str
    clip: tuple[float, float] = (0.1, 10.0)
    normalize: bool = True
    tail: float = 0.20
    two_sided: bool = True
    threshold_q: float = 0.85
    center: tuple[float, float] = (1.2, -1.0)
    bandwidth: float = 0.8
    group: int | None = None
    expression: str | None = None
    columns: tuple[str, str] | None = None  # None means the first two continuous columns

    def __post_init__(self):
        if self.kind not in SHIFT_KINDS:
            raise ConfigError(f"unknown shift {self.kind!r}; expected one of {SHIFT_KINDS}")
        lo, hi = self.clip
        if not 0 <= lo < hi:
            raise ConfigError(f"shift clip needs 0 <= lo < hi, got {self.clip}")
        if not 0 < self.tail < 1 or not 0 < self.threshold_q < 1:
            raise ConfigError("shift quantile levels must lie in (0, 1)")
        if not self.bandwidth > 0:
            raise ConfigError("bump bandwidth must be positive")
        if self.kind == "group" and self.group is None:
            raise ConfigError("group shift needs a group id")
        if self.kind == "custom":
            if not self.expression:
                raise ConfigError("custom shift needs an expression")
            parse_expression(self.expression)

    @property
    def is_subgroup(self) -> bool:
        return self.kind in SUBGROUPS

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(self).items()}


def standardize(data: Dataset, reference: Dataset, columns=None) -> np.ndarray:
    """(x - mean_ref) / sd_ref per named continuous column, sd with n - 1."""
    columns = list(columns or reference.cont_names[:2])
    if reference.n < 2:
        raise DataError("standardization needs a reference sample of at least 2 rows")
    out = np.empty((data.n, len(columns)))
    for j, name in enumerate(columns):
        ref = reference.column(name)
        sd = float(np.std(ref, ddof=1))
        if not sd > 0:
            raise DataError(f"column {name!r} has zero variance in the reference sample")
        out[:, j] = (data.column(name) - float(np.mean(ref))) / sd
    return out


def clip_weights(w, lo: float, hi: float) -> np.ndarray:
    return np.clip(np.asarray(w, dtype=float), lo, hi)


# ---------------------------------------------------------------------------
# custom weight expressions: a small recursive-descent parser

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)|([A-Za-z_]\w*)|(\*\*|[-+*/^()]))")
_VARS = ("z1", "z2", "x6", "x7")
_FUNCS = {"abs": np.abs, "exp": np.exp}


def _tokenize(text: str) -> list[str]:
    toks, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ConfigError(f"bad character in shift expression at position {pos}: {text[pos:]!r}")
        toks.append(m.group(m.lastindex))
        pos = m.end()
    return toks


class _Parser:
    """expr := term (('+'|'-') term)*; term := unary (('*'|'/') unary)*;
    unary := '-' unary | power; power := atom ('^' unary)?;
    atom := number | var | func '(' expr ')' | '(' expr ')'."""

    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, want=None):
        tok = self.peek()
        if tok is None or (want is not None and tok != want):
            raise ConfigError(f"shift expression: expected {want or 'a term'}, got {tok!r}")
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.peek() is not None:
            raise ConfigError(f"shift expression: unexpected {self.peek()!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in ("+", "-"):
            node = (self.take(), node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek() in ("*", "/"):
            node = (self.take(), node, self.unary())
        return node

    def unary(self):
        if self.peek() == "-":
            self.take()
            return ("neg", self.unary())
        if self.peek() == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        node = self.atom()
        if self.peek() in ("^", "**"):
            self.take()
            node = ("^", node, self.unary())
        return node

    def atom(self):
        tok = self.take()
        if tok == "(":
            node = self.expr()
            self.take(")")
            return node
        if tok[0].isdigit() or tok[0] == ".":
            return ("num", float(tok))
        if tok in _FUNCS:
            self.take("(")
            arg = self.expr()
            self.take(")")
            return ("call", tok, arg)
        if tok in _VARS:
            return ("var", tok)
        raise ConfigError(f"shift expression: unknown name {tok!r}; use z1, z2, x6, x7, abs, exp")


def parse_expression(text: str):
    return _Parser(text).parse()


def expression_vars(node) -> set[str]:
    if node[0] == "var":
        return {node[1]}
    return set().union(*(expression_vars(c) for c in node[1:] if isinstance(c, tuple)))


def eval_expression(node, env: dict[str, np.ndarray]):
    op = node[0]
    if op == "num":
        return node[1]
    if op == "var":
        return env[node[1]]
    if op == "neg":
        return -eval_expression(node[1], env)
    if op == "call":
        return _FUNCS[node[1]](eval_expression(node[2], env))
    a, b = eval_expression(node[1], env), eval_expression(node[2], env)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return a / b
        return np.power(a, b)


# ---------------------------------------------------------------------------
# weights


def _cat(data: Dataset, name: str) -> np.ndarray:
    """Categorical column as its original numeric level values."""
    j = data.cat_index(name)
    return np.asarray(data.cat_levels[j], float)[data.x_cat[:, j]]


def subgroup_mask(data: Dataset, spec: ShiftSpec, reference: Dataset, group_ids=None) -> np.ndarray:
    if spec.kind == "group":
        if group_ids is None:
            raise ConfigError("group shift needs group ids")
        return np.asarray(group_ids) == spec.group
    z = standardize(data, reference, spec.columns)
    zr = standardize(reference, reference, spec.columns)
    if spec.kind in ("interaction_reg", "interaction_neg"):
        p, pr = z[:, 0] * z[:, 1], zr[:, 0] * zr[:, 1]
        if spec.kind == "interaction_neg":
            return p <= lower_quantile(pr, spec.tail)
        if spec.two_sided:
            return (p <= lower_quantile(pr, spec.tail / 2)) | (p >= lower_quantile(pr, 1 - spec.tail / 2))
        return p >= lower_quantile(pr, 1 - spec.tail)
    d = _difficulty(z)
    return d >= lower_quantile(_difficulty(zr), spec.threshold_q)


def _difficulty(z):
    return 0.5 * np.abs(z[:, 0]) + 0.3 * z[:, 1] ** 2 + 0.2 * np.abs(z[:, 0] * z[:, 1])


def raw_tilt(data: Dataset, spec: ShiftSpec, reference: Dataset) -> np.ndarray:
    """Unclipped, unnormalized tilt weights."""
    z = standardize(data, reference, spec.columns)
    z1, z2 = z[:, 0], z[:, 1]
    if spec.kind == "curvature_tilt":
        return np.exp(0.4 * z2 ** 2)
    if spec.kind == "hard_mixed_tilt":
        return np.exp(0.30 * np.abs(z1) + 0.25 * z2 ** 2 + 0.25 * z1 * z2
                      + 0.25 * _cat(data, "x6") + 0.25 * _cat(data, "x7"))
    if spec.kind == "local_bump":
        c1, c2 = spec.center
        return np.exp(-((z1 - c1) ** 2 + (z2 - c2) ** 2) / (2 * spec.bandwidth ** 2))
    env = {"z1": z1, "z2": z2}
    for name in ("x6", "x7"):
        if name in data.cat_names:
            env[name] = _cat(data, name)
    tree = parse_expression(spec.expression)
    missing = sorted(expression_vars(tree) - env.keys())
    if missing:
        raise DataError(f"shift expression uses {missing}, which the data lacks")
    w = np.broadcast_to(np.asarray(eval_expression(tree, env), float), (data.n,)).copy()
    if not np.all(np.isfinite(w)) or (w < 0).any():
        raise DataError("custom shift expression produced negative or non-finite weights")
    return w


def make_weights(data: Dataset, spec: ShiftSpec, reference: Dataset | None = None, group_ids=None) -> np.ndarray:
    reference = data if reference is None else reference
    if spec.is_subgroup:
        m = subgroup_mask(data, spec, reference, group_ids)
        mass = m.mean()
        if m.sum() == 0:
            raise DataError(f"degenerate shift: subgroup {spec.kind!r} is empty")
        return m / mass if spec.normalize else m.astype(float)
    w = clip_weights(raw_tilt(data, spec, reference), *spec.clip)
    if spec.normalize:
        w = w / w.mean()
    return w


def weighted_eval(y, f, weights, kind: ScoreKind | None = None, group_ids=None,
                  buckets: BucketSpec | None = None, f_star=None, tau: float | None = None) -> EvalReport:
    w = np.asarray(weights, float)
    if not w.sum() > 0:
        raise DataError("all shift weights are zero")
    return evaluate(y, f, group_ids, kind, w, buckets, f_star, tau)
