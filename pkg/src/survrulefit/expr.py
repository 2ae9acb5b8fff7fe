"""Arithmetic expressions over covariates (``"2*X6 - 1.2*X7"``), evaluated column-wise.

Parsed once with :mod:`ast` into a whitelisted tree; covariate ``Xj`` refers to
column ``j - 1`` of the design matrix.
"""

import ast
import re

import numpy as np

_VAR = re.compile(r"^X([1-9][0-9]*)$")

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
_UNARY = {ast.USub: np.negative, ast.UAdd: np.positive}


class Expression:
    def __init__(self, text):
        self.text = str(text)
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise ValueError(f"invalid expression {text!r}: {exc.msg}") from None
        self._root = tree.body
        self._columns = set()
        self._check(self._root)

    def _check(self, node):
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            self._check(node.operand)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            pass
        elif isinstance(node, ast.Name) and _VAR.match(node.id):
            self._columns.add(int(_VAR.match(node.id).group(1)) - 1)
        else:
            raise ValueError(f"unsupported element in expression {self.text!r}: {ast.dump(node)}")

    @property
    def columns(self):
        """Zero-based covariate columns referenced."""
        return frozenset(self._columns)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if self._columns and max(self._columns) >= X.shape[1]:
            raise ValueError(
                f"expression {self.text!r} references X{max(self._columns) + 1} "
                f"but only {X.shape[1]} covariates are present"
            )
        out = self._eval(self._root, X)
        return np.broadcast_to(np.asarray(out, dtype=float), (X.shape[0],)).copy()

    def _eval(self, node, X):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, X), self._eval(node.right, X))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, X))
        if isinstance(node, ast.Constant):
            return float(node.value)
        return X[:, int(node.id[1:]) - 1]

    def __repr__(self):
        return f"Expression({self.text!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and other.text == self.text

    def __hash__(self):
        return hash(self.text)
