"""Input validation, nuisance rotation and the treatment/residual split.

Every estimator downstream sees the response only through the two pieces
produced here:

    Y1 = Y X (X'X)^{-1}     (p x d, carries the covariate effects)
    Y2 = Y A                (p x (n-d), design-free residual space)

where the columns of ``A`` form an orthonormal basis of ker(X').  The two
pieces are independent under Gaussian noise because A'X = 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import IllConditionedError, InputError, RankDeficientError

XTX_COND_LIMIT = 1e12
_RANK_RTOL = 1e-10


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InputError(f"{name} must be a 2-d matrix, got {arr.ndim} dims")
    if not np.all(np.isfinite(arr)):
        i, j = np.argwhere(~np.isfinite(arr))[0]
        raise InputError(f"{name} has a non-finite entry at row {i}, column {j}")
    return arr


@dataclass(frozen=True)
class ObservedData:
    """Response ``y`` (p x n), covariates of interest ``x`` (n x d), optional
    nuisance covariates ``z`` (n x r), plus row/column labels."""

    y: np.ndarray
    x: np.ndarray
    z: Optional[np.ndarray] = None
    feature_ids: Optional[Sequence[str]] = None
    sample_ids: Optional[Sequence[str]] = None
    covariate_names: Optional[Sequence[str]] = None

    def __post_init__(self):
        y = _as_matrix(self.y, "y")
        x = _as_matrix(self.x, "x")
        p, n = y.shape
        if x.shape[0] != n:
            raise InputError(f"x has {x.shape[0]} rows but y has {n} sample columns")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        if self.z is not None:
            z = _as_matrix(self.z, "z")
            if z.shape[0] != n:
                raise InputError(f"z has {z.shape[0]} rows but y has {n} sample columns")
            if z.shape[1] == 0:
                z = None
            object.__setattr__(self, "z", z)
        fids = list(self.feature_ids) if self.feature_ids is not None else [f"f{g}" for g in range(p)]
        sids = list(self.sample_ids) if self.sample_ids is not None else [f"s{i}" for i in range(n)]
        cnames = (list(self.covariate_names) if self.covariate_names is not None
                  else [f"x{j}" for j in range(x.shape[1])])
        if len(fids) != p:
            raise InputError(f"{len(fids)} feature ids for {p} features")
        if len(sids) != n:
            raise InputError(f"{len(sids)} sample ids for {n} samples")
        if len(cnames) != x.shape[1]:
            raise InputError(f"{len(cnames)} covariate names for {x.shape[1]} covariates")
        object.__setattr__(self, "feature_ids", fids)
        object.__setattr__(self, "sample_ids", sids)
        object.__setattr__(self, "covariate_names", cnames)

    @property
    def p(self) -> int:
        return self.y.shape[0]

    @property
    def n(self) -> int:
        return self.y.shape[1]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def r(self) -> int:
        return 0 if self.z is None else self.z.shape[1]


@dataclass(frozen=True)
class Partition:
    y1: np.ndarray
    y2: np.ndarray
    a_basis: np.ndarray
    xtx: np.ndarray
    n_eff: int
    d: int
    x: np.ndarray = field(repr=False)
    feature_ids: Sequence[str] = field(default=(), repr=False)
    covariate_names: Sequence[str] = field(default=(), repr=False)

    @property
    def p(self) -> int:
        return self.y1.shape[0]


def orthonormal_complement(x) -> np.ndarray:
    """Orthonormal basis of ker(x') from a complete Householder QR of ``x``.

    Raises :class:`RankDeficientError` naming the first column that is
    (numerically) a combination of the columns before it.
    """
    x = _as_matrix(x, "x")
    n, d = x.shape
    if d >= n:
        raise RankDeficientError(f"x has {d} columns but only {n} rows; no complement exists",
                                 column=n if d > n else None)
    q, r = np.linalg.qr(x, mode="complete")
    diag = np.abs(np.diag(r))
    scale = max(diag.max(initial=0.0), np.abs(x).max(initial=0.0))
    small = np.flatnonzero(diag <= _RANK_RTOL * scale) if scale > 0 else np.arange(d)
    if small.size:
        j = int(small[0])
        raise RankDeficientError(f"column {j} of x is linearly dependent on the preceding columns",
                                 column=j)
    return q[:, d:]


def remove_nuisance(data: ObservedData) -> ObservedData:
    """Rotate the nuisance covariates out of ``y`` and ``x``.

    With Q an orthonormal basis of ker(z'), returns y Q and Q'x, so the
    effective sample size drops from n to n - r.  Identity when ``z`` is absent.
    """
    if data.z is None:
        return data
    z = data.z
    q = orthonormal_complement(z)
    try:
        orthonormal_complement(np.hstack([z, data.x]))
    except RankDeficientError as err:
        col = err.column - z.shape[1] if err.column is not None else None
        if col is None or col < 0:
            raise
        raise RankDeficientError(
            f"covariate {data.covariate_names[col]!r} (column {col} of x) lies in the span of "
            "the nuisance covariates and earlier columns of x", column=col) from None
    n_eff = q.shape[1]
    return ObservedData(
        y=data.y @ q,
        x=q.T @ data.x,
        z=None,
        feature_ids=data.feature_ids,
        sample_ids=[f"rot{i}" for i in range(n_eff)],
        covariate_names=data.covariate_names,
    )


def nuisance_basis(data: ObservedData) -> Optional[np.ndarray]:
    """The rotation used by :func:`remove_nuisance` (None when no nuisance)."""
    return None if data.z is None else orthonormal_complement(data.z)


def partition(data: ObservedData, a_basis: Optional[np.ndarray] = None) -> Partition:
    """Split ``y`` into Y1 = Y X (X'X)^{-1} and Y2 = Y A.

    Nuisance covariates, if still present, are rotated out first.  ``a_basis``
    may be supplied to use a specific orthonormal basis of ker(X') (any valid
    basis gives the same downstream estimates).
    """
    if data.z is not None:
        data = remove_nuisance(data)
    x = data.x
    n, d = x.shape
    if a_basis is None:
        a_basis = orthonormal_complement(x)
    else:
        a_basis = np.asarray(a_basis, dtype=np.float64)
        if a_basis.shape != (n, n - d):
            raise InputError(f"a_basis must be {n}x{n - d}, got {a_basis.shape}")
    xtx = x.T @ x
    cond = np.linalg.cond(xtx)
    if not np.isfinite(cond) or cond > XTX_COND_LIMIT:
        raise IllConditionedError(f"X'X has condition number {cond:.3g} > {XTX_COND_LIMIT:g}")
    if data.p <= n:
        warnings.warn(f"p={data.p} features is not larger than n={n} samples; "
                      "the large-p asymptotics behind the estimator do not apply", stacklevel=2)
    y1 = np.linalg.solve(xtx, (data.y @ x).T).T
    y2 = data.y @ a_basis
    return Partition(y1=y1, y2=y2, a_basis=a_basis, xtx=xtx, n_eff=n, d=d, x=x,
                     feature_ids=data.feature_ids, covariate_names=data.covariate_names)
