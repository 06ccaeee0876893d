"""Ordinary least squares fitting and the model artifact it produces.

The learner solves the normal equations on the 1-augmented design
matrix. A tiny ridge term (1e-9, feature diagonal only, so the
intercept stays unbiased) keeps exactly collinear inputs solvable. All
sums use math.fsum, making coefficients independent of row order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from ..errors import SingularSystem

RIDGE = 1e-9
MODEL_KIND = "least-squares-linear"


@dataclass
class ModelArtifact:
    kind: str
    coefficients: list
    intercept: float
    feature_names: list
    target_name: str
    training_metrics: dict = field(default_factory=dict)  # rmse, n_rows
    gid: str | None = None

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "coefficients": list(self.coefficients),
            "intercept": self.intercept,
            "feature_names": list(self.feature_names),
            "target_name": self.target_name,
            "training_metrics": dict(self.training_metrics),
            "gid": self.gid,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelArtifact":
        return cls(
            kind=obj["kind"],
            coefficients=list(obj["coefficients"]),
            intercept=float(obj["intercept"]),
            feature_names=list(obj["feature_names"]),
            target_name=obj["target_name"],
            training_metrics=dict(obj.get("training_metrics", {})),
            gid=obj.get("gid"),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)

    @classmethod
    def loads(cls, text: str) -> "ModelArtifact":
        return cls.from_json(json.loads(text))

    def apply(self, feature_row) -> float:
        total = math.fsum(w * float(x) for w, x in zip(self.coefficients, feature_row))
        return total + self.intercept


def _solve(matrix: list, rhs: list) -> list:
    """Gaussian elimination with partial pivoting on a small dense
    system; destroys its arguments."""
    n = len(rhs)
    a = [row[:] + [rhs[i]] for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(a[r][col]))
        if abs(a[pivot][col]) < 1e-300:
            raise SingularSystem(f"pivot {col} is zero")
        a[col], a[pivot] = a[pivot], a[col]
        for r in range(col + 1, n):
            factor = a[r][col] / a[col][col]
            if factor != 0.0:
                for c in range(col, n + 1):
                    a[r][c] -= factor * a[col][c]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        x[r] = (a[r][n] - math.fsum(a[r][c] * x[c] for c in range(r + 1, n))) / a[r][r]
    return x


def fit_ols(
    feature_rows: list,
    targets: list,
    feature_names: list,
    target_name: str,
    ridge: float = RIDGE,
) -> ModelArtifact:
    """Fit y = X w + b by normal equations; returns the artifact with
    rmse and n_rows metrics."""
    n = len(targets)
    k = len(feature_names)
    if n == 0:
        raise SingularSystem("cannot fit on an empty dataset")
    # gram matrix of [X | 1]
    cols = [[float(row[j]) for row in feature_rows] for j in range(k)]
    cols.append([1.0] * n)
    y = [float(t) for t in targets]
    dim = k + 1
    gram = [[math.fsum(cols[i][r] * cols[j][r] for r in range(n)) for j in range(dim)] for i in range(dim)]
    rhs = [math.fsum(cols[i][r] * y[r] for r in range(n)) for i in range(dim)]
    for i in range(k):
        gram[i][i] += ridge
    solution = _solve(gram, rhs)
    coefficients = solution[:k]
    intercept = solution[k]

    residuals = []
    for r in range(n):
        pred = math.fsum(coefficients[j] * cols[j][r] for j in range(k)) + intercept
        residuals.append((pred - y[r]) ** 2)
    rmse = math.sqrt(math.fsum(residuals) / n)
    return ModelArtifact(
        kind=MODEL_KIND,
        coefficients=coefficients,
        intercept=intercept,
        feature_names=list(feature_names),
        target_name=target_name,
        training_metrics={"rmse": rmse, "n_rows": n},
    )
