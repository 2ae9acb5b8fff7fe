"""Rules: conjunctions of covariate conditions, their canonical form and deduplication."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPS = ("==", "!=", "<=", ">")
_OP_ORDER = {"==": 0, "!=": 1, "<=": 2, ">": 3}


@dataclass(frozen=True, order=True)
class Condition:
    """``X[var] op value``; ``==``/``!=`` are for binary columns, ``<=``/``>`` for continuous."""

    var: int
    op: str
    value: float

    def __post_init__(self):
        if self.op not in OPS:
            raise ValueError(f"unknown comparator {self.op!r}")
        if not np.isfinite(self.value):
            raise ValueError("condition threshold must be finite")
        if self.op in ("==", "!=") and self.value not in (0, 1):
            raise ValueError("binary conditions compare against 0 or 1")
        object.__setattr__(self, "var", int(self.var))
        object.__setattr__(self, "value", float(self.value))

    def holds(self, X):
        col = X[:, self.var]
        if self.op == "==":
            return col == self.value
        if self.op == "!=":
            return col != self.value
        if self.op == "<=":
            return col <= self.value
        return col > self.value

    def text(self, names=None):
        name = names[self.var] if names is not None else f"X{self.var + 1}"
        value = int(self.value) if self.op in ("==", "!=") else f"{self.value:.4g}"
        return f"{name} {self.op} {value}"


def canonical_conditions(conditions):
    """Sorted, merged condition tuple.

    ``!= v`` on a binary column becomes ``== 1-v``; repeated ``<=``/``>`` bounds on one
    covariate collapse to the tightest interval.  Raises ValueError on a contradiction.
    """
    eq = {}
    upper = {}
    lower = {}
    for c in conditions:
        if c.op in ("==", "!="):
            v = c.value if c.op == "==" else 1.0 - c.value
            if eq.setdefault(c.var, v) != v:
                raise ValueError(f"contradictory conditions on X{c.var + 1}")
        elif c.op == "<=":
            upper[c.var] = min(upper.get(c.var, np.inf), c.value)
        else:
            lower[c.var] = max(lower.get(c.var, -np.inf), c.value)
    out = [Condition(v, "==", val) for v, val in eq.items()]
    out += [Condition(v, "<=", val) for v, val in upper.items()]
    out += [Condition(v, ">", val) for v, val in lower.items()]
    for v in set(upper) & set(lower):
        if lower[v] >= upper[v]:
            raise ValueError(f"contradictory interval on X{v + 1}")
    for v in eq:
        if v in upper or v in lower:
            raise ValueError(f"X{v + 1} used as both binary and continuous")
    return tuple(sorted(out, key=lambda c: (c.var, _OP_ORDER[c.op])))


@dataclass(frozen=True)
class Rule:
    """Subgroup indicator r(x) = prod_k I(condition_k holds)."""

    conditions: tuple
    support: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.conditions) == 0:
            raise ValueError("a rule needs at least one condition")
        object.__setattr__(self, "conditions", canonical_conditions(self.conditions))

    @property
    def variables(self):
        return sorted({c.var for c in self.conditions})

    def evaluate(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        top = max(c.var for c in self.conditions)
        if top >= X.shape[1]:
            raise IndexError(f"rule references covariate index {top} but X has {X.shape[1]} columns")
        out = np.ones(X.shape[0], dtype=bool)
        for c in self.conditions:
            out &= c.holds(X)
        return out

    def with_support(self, support):
        return Rule(self.conditions, float(support))

    def text(self, names=None):
        return " & ".join(c.text(names) for c in self.conditions)

    def to_dict(self, names=None):
        return {
            "conditions": [
                {"var": names[c.var] if names is not None else c.var, "op": c.op, "value": c.value}
                for c in self.conditions
            ]
        }

    @classmethod
    def from_dict(cls, raw, names=None):
        conds = []
        for c in raw["conditions"]:
            var = c["var"]
            if isinstance(var, str):
                if names is None or var not in names:
                    raise KeyError(f"rule covariate {var!r} not among the supplied columns")
                var = list(names).index(var)
            conds.append(Condition(var, c["op"], c["value"]))
        return cls(tuple(conds), raw.get("support"))


def evaluate_rule(rule: Rule, x) -> int:
    return int(rule.evaluate(np.asarray(x, dtype=float).reshape(1, -1))[0])


def rule_matrix(rules, X):
    """n x K 0/1 float matrix of rule evaluations."""
    X = np.asarray(X, dtype=float)
    if not rules:
        return np.zeros((X.shape[0], 0))
    return np.column_stack([r.evaluate(X) for r in rules]).astype(float)


def dedup_rules(rules, X):
    """Canonical, non-constant, non-duplicated, non-complementary rules with training support.

    Keeps the first occurrence of each canonical form, then drops rules whose
    training-set indicator is constant, equal to an earlier one, or the complement
    of an earlier one.
    """
    X = np.asarray(X, dtype=float)
    seen = set()
    seen_cols = set()
    kept = []
    for r in rules:
        if not isinstance(r, Rule):
            r = Rule(tuple(r))
        if r.conditions in seen:
            continue
        seen.add(r.conditions)
        col = r.evaluate(X)
        s = col.mean()
        if s == 0.0 or s == 1.0:
            continue
        key = np.packbits(col).tobytes()
        comp = np.packbits(~col).tobytes()
        if key in seen_cols or comp in seen_cols:
            continue
        seen_cols.add(key)
        kept.append(r.with_support(s))
    return kept


def rule_hygiene(rules, X) -> dict:
    """Counts of defects in a rule list evaluated on ``X``.

    ``duplicates``: pairs sharing a canonical form; ``complements``: pairs whose
    indicators sum to one on every row; ``identical``: pairs with equal indicators;
    ``degenerate``: rules with support 0 or 1.
    """
    X = np.asarray(X, dtype=float)
    forms = {}
    cols = {}
    out = {"duplicates": 0, "complements": 0, "identical": 0, "degenerate": 0}
    for r in rules:
        forms[r.conditions] = forms.get(r.conditions, 0) + 1
        col = r.evaluate(X)
        if col.all() or not col.any():
            out["degenerate"] += 1
        key = np.packbits(col).tobytes()
        cols[key] = cols.get(key, 0) + 1
    out["duplicates"] = sum(c * (c - 1) // 2 for c in forms.values())
    out["identical"] = sum(c * (c - 1) // 2 for c in cols.values())
    n = X.shape[0]
    for key, c in cols.items():
        comp = np.packbits(~np.unpackbits(np.frombuffer(key, dtype=np.uint8), count=n).astype(bool)).tobytes()
        if comp in cols and key < comp:
            out["complements"] += c * cols[comp]
    return out
