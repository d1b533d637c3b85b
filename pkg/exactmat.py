from typing import List, Optional, Sequence, Tuple, Union, Any
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
import logging
import re

from sympy import isprime
from sympy.polys.domains import QQ, GF
from sympy.polys.matrices import DomainMatrix

logger = logging.getLogger(__name__)

ScalarLike = Union[int, Fraction, str, "Scalar"]

_RATIONAL_TEXT = re.compile(r"[+-]?\d+(?:/\d+)?\Z")


class FieldMismatchError(ValueError):
    """Operands live over different fields."""


class DimensionMismatchError(ValueError):
    """Operand shapes are incompatible."""


class SingularMatrixError(ValueError):
    """Inverse requested for a singular matrix."""


@lru_cache(maxsize=None)
def _domain_for(kind: str, p: Optional[int]):
    if kind == "Q":
        return QQ
    return GF(p)


@dataclass(frozen=True)
class FieldSpec:
    """Ground field: the rationals ("Q") or a prime field ("Fp" with modulus p).

    Field values used at the API boundary are canonical Python values:
    Fraction in lowest terms for Q, int in [0, p) for Fp.
    """
    kind: str = "Q"
    p: Optional[int] = None

    def __post_init__(self):
        if self.kind == "Q":
            if self.p is not None:
                raise ValueError("The rational field takes no modulus")
        elif self.kind == "Fp":
            if self.p is None or not isinstance(self.p, int) or not isprime(self.p):
                raise ValueError(f"Fp modulus must be prime, got {self.p!r}")
        else:
            raise ValueError("Field kind must be one of: 'Q', 'Fp'")

    @classmethod
    def rationals(cls) -> "FieldSpec":
        return cls("Q")

    @classmethod
    def prime(cls, p: int) -> "FieldSpec":
        return cls("Fp", p)

    @property
    def is_rational(self) -> bool:
        return self.kind == "Q"

    @property
    def characteristic(self) -> int:
        return 0 if self.is_rational else self.p

    @property
    def domain(self):
        return _domain_for(self.kind, self.p)

    def coerce(self, value: ScalarLike):
        """Canonical Python value for an int, Fraction, "a/b" string or Scalar."""
        if isinstance(value, Scalar):
            if value.field != self:
                raise FieldMismatchError(f"Scalar over {value.field} used over {self}")
            return value.value
        if isinstance(value, str):
            if not _RATIONAL_TEXT.match(value.strip()):
                raise ValueError(f"Not a field element (expected an integer or p/q): {value!r}")
            try:
                value = Fraction(value.strip())
            except (ValueError, ZeroDivisionError):
                raise ValueError(f"Not a field element: {value!r}")
        if isinstance(value, bool) or not isinstance(value, (int, Fraction)):
            raise TypeError(f"Unsupported scalar type: {type(value).__name__}")
        if self.is_rational:
            return Fraction(value)
        frac = Fraction(value)
        if frac.denominator % self.p == 0:
            raise ValueError(f"{value} has no image in {self}")
        return (frac.numerator * pow(frac.denominator, -1, self.p)) % self.p

    def to_domain(self, value):
        value = self.coerce(value)
        if self.is_rational:
            return QQ(value.numerator, value.denominator)
        return self.domain(value)

    def from_domain(self, element):
        converted = self.domain.to_sympy(element)
        if self.is_rational:
            return Fraction(int(converted.p), int(converted.q))
        return int(converted) % self.p

    def zero(self):
        return self.coerce(0)

    def one(self):
        return self.coerce(1)

    def format(self, value) -> str:
        value = self.coerce(value)
        if self.is_rational and value.denominator != 1:
            return f"{value.numerator}/{value.denominator}"
        return str(int(value))

    def to_json(self) -> dict:
        if self.is_rational:
            return {"kind": "Q"}
        return {"kind": "Fp", "p": self.p}

    def __str__(self) -> str:
        return "Q" if self.is_rational else f"Fp({self.p})"


RATIONALS = FieldSpec.rationals()


@dataclass(frozen=True)
class Scalar:
    field: FieldSpec
    value: Any

    @classmethod
    def of(cls, field: FieldSpec, value: ScalarLike) -> "Scalar":
        return cls(field, field.coerce(value))

    @property
    def is_zero(self) -> bool:
        return self.value == 0

    def __str__(self) -> str:
        return self.field.format(self.value)


def _check_same_field(*fields: FieldSpec):
    first = fields[0]
    for other in fields[1:]:
        if other != first:
            raise FieldMismatchError(f"Field mismatch: {first} vs {other}")


class Mat:
    """Dense exact matrix over a FieldSpec.

    Instances are immutable; arithmetic returns new matrices. The entries are
    held in a sympy DomainMatrix over QQ or GF(p).
    """
    __slots__ = ("field", "n_rows", "n_cols", "_dm", "_rows")

    def __init__(self, field: FieldSpec, n_rows: int, n_cols: int, domain_rows: List[List[Any]]):
        if len(domain_rows) != n_rows or any(len(row) != n_cols for row in domain_rows):
            raise DimensionMismatchError(f"Entries do not form a {n_rows}x{n_cols} grid")
        self.field = field
        self.n_rows = n_rows
        self.n_cols = n_cols
        self._rows = [list(row) for row in domain_rows]
        self._dm = None

    # construction

    @classmethod
    def from_rows(cls, field: FieldSpec, rows: Sequence[Sequence[ScalarLike]], n_cols: Optional[int] = None) -> "Mat":
        rows = [list(row) for row in rows]
        if n_cols is None:
            n_cols = len(rows[0]) if rows else 0
        return cls(field, len(rows), n_cols, [[field.to_domain(x) for x in row] for row in rows])

    @classmethod
    def from_domain_matrix(cls, field: FieldSpec, dm: DomainMatrix) -> "Mat":
        n_rows, n_cols = dm.shape
        rows = dm.to_list() if n_rows and n_cols else [[] for _ in range(n_rows)]
        mat = cls(field, n_rows, n_cols, rows)
        return mat

    @classmethod
    def zeros(cls, field: FieldSpec, n_rows: int, n_cols: Optional[int] = None) -> "Mat":
        n_cols = n_rows if n_cols is None else n_cols
        zero = field.domain.zero
        return cls(field, n_rows, n_cols, [[zero] * n_cols for _ in range(n_rows)])

    @classmethod
    def identity(cls, field: FieldSpec, n: int) -> "Mat":
        return cls.diag(field, [1] * n)

    @classmethod
    def diag(cls, field: FieldSpec, values: Sequence[ScalarLike]) -> "Mat":
        n = len(values)
        zero = field.domain.zero
        rows = [[zero] * n for _ in range(n)]
        for i, value in enumerate(values):
            rows[i][i] = field.to_domain(value)
        return cls(field, n, n, rows)

    @classmethod
    def scalar(cls, field: FieldSpec, n: int, value: ScalarLike) -> "Mat":
        return cls.diag(field, [value] * n)

    @classmethod
    def unit(cls, field: FieldSpec, n_rows: int, n_cols: int, i: int, j: int) -> "Mat":
        """Matrix unit with a single 1 at (i, j)."""
        mat = cls.zeros(field, n_rows, n_cols)
        mat._rows[i][j] = field.domain.one
        return mat

    @classmethod
    def from_columns(cls, field: FieldSpec, n: int, columns: Sequence["Mat"]) -> "Mat":
        """Juxtapose n×1 column vectors into an n×len(columns) matrix."""
        for col in columns:
            if col.shape != (n, 1):
                raise DimensionMismatchError(f"Expected a column of length {n}, got {col.shape}")
        rows = [[col._rows[i][0] for col in columns] for i in range(n)]
        return cls(field, n, len(columns), rows)

    @classmethod
    def standard_vector(cls, field: FieldSpec, n: int, i: int) -> "Mat":
        return cls.unit(field, n, 1, i, 0)

    # access

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def is_square(self) -> bool:
        return self.n_rows == self.n_cols

    @property
    def size(self) -> int:
        if not self.is_square:
            raise DimensionMismatchError(f"Matrix of shape {self.shape} is not square")
        return self.n_rows

    @property
    def domain_matrix(self) -> DomainMatrix:
        if self._dm is None:
            self._dm = DomainMatrix(self._rows, self.shape, self.field.domain)
        return self._dm

    def domain_rows(self) -> List[List[Any]]:
        return [list(row) for row in self._rows]

    def entry(self, i: int, j: int) -> Scalar:
        return Scalar(self.field, self.field.from_domain(self._rows[i][j]))

    def to_values(self) -> List[List[Any]]:
        """Rows of canonical Python values (Fraction for Q, int for Fp)."""
        return [[self.field.from_domain(x) for x in row] for row in self._rows]

    def to_strings(self) -> List[List[str]]:
        return [[self.field.format(v) for v in row] for row in self.to_values()]

    def column(self, j: int) -> "Mat":
        return Mat(self.field, self.n_rows, 1, [[row[j]] for row in self._rows])

    def columns(self) -> List["Mat"]:
        return [self.column(j) for j in range(self.n_cols)]

    def block(self, r0: int, r1: int, c0: int, c1: int) -> "Mat":
        """Submatrix of rows r0..r1-1 and columns c0..c1-1."""
        return Mat(self.field, r1 - r0, c1 - c0, [row[c0:c1] for row in self._rows[r0:r1]])

    def select_columns(self, indices: Sequence[int]) -> "Mat":
        return Mat(self.field, self.n_rows, len(indices), [[row[j] for j in indices] for row in self._rows])

    def is_zero(self) -> bool:
        zero = self.field.domain.zero
        return all(x == zero for row in self._rows for x in row)

    def is_identity(self) -> bool:
        return self.is_square and self == Mat.identity(self.field, self.n_rows)

    # arithmetic

    def _binary_check(self, other: "Mat"):
        if not isinstance(other, Mat):
            raise TypeError(f"Expected Mat, got {type(other).__name__}")
        _check_same_field(self.field, other.field)

    def __add__(self, other: "Mat") -> "Mat":
        self._binary_check(other)
        if self.shape != other.shape:
            raise DimensionMismatchError(f"Cannot add {self.shape} and {other.shape}")
        return Mat(self.field, self.n_rows, self.n_cols,
                   [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(self._rows, other._rows)])

    def __sub__(self, other: "Mat") -> "Mat":
        self._binary_check(other)
        if self.shape != other.shape:
            raise DimensionMismatchError(f"Cannot subtract {other.shape} from {self.shape}")
        return Mat(self.field, self.n_rows, self.n_cols,
                   [[a - b for a, b in zip(ra, rb)] for ra, rb in zip(self._rows, other._rows)])

    def __neg__(self) -> "Mat":
        return Mat(self.field, self.n_rows, self.n_cols, [[-a for a in row] for row in self._rows])

    def __matmul__(self, other: "Mat") -> "Mat":
        self._binary_check(other)
        if self.n_cols != other.n_rows:
            raise DimensionMismatchError(f"Cannot multiply {self.shape} by {other.shape}")
        if self.n_rows == 0 or other.n_cols == 0 or self.n_cols == 0:
            return Mat.zeros(self.field, self.n_rows, other.n_cols)
        product = self.domain_matrix.matmul(other.domain_matrix)
        return Mat.from_domain_matrix(self.field, product)

    def scale(self, value: ScalarLike) -> "Mat":
        c = self.field.to_domain(value)
        return Mat(self.field, self.n_rows, self.n_cols, [[c * a for a in row] for row in self._rows])

    def power(self, k: int) -> "Mat":
        result = Mat.identity(self.field, self.size)
        for _ in range(k):
            result = result @ self
        return result

    def transpose(self) -> "Mat":
        return Mat(self.field, self.n_cols, self.n_rows,
                   [[self._rows[i][j] for i in range(self.n_rows)] for j in range(self.n_cols)])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mat):
            return NotImplemented
        return self.field == other.field and self.shape == other.shape and self._rows == other._rows

    def __hash__(self):
        return hash((self.field, self.shape, tuple(tuple(str(x) for x in row) for row in self._rows)))

    def __repr__(self) -> str:
        return f"Mat({self.field}, {self.to_strings()})"


# elimination

def _rref(mat: Mat) -> Tuple[List[List[Any]], Tuple[int, ...]]:
    """Reduced row echelon form rows and pivot columns (leftmost pivots first)."""
    if mat.n_rows == 0 or mat.n_cols == 0:
        return mat.domain_rows(), ()
    reduced, pivots = mat.domain_matrix.rref()
    return reduced.to_list(), tuple(pivots)


def rank(A: Mat) -> int:
    """Dimension of the column space of A."""
    return len(_rref(A)[1])


def normalized_rank(A: Mat) -> Fraction:
    """rank(A)/n for square A; the 0×0 matrix has normalized rank 0."""
    n = A.size
    if n == 0:
        return Fraction(0)
    return Fraction(rank(A), n)


class Subspace:
    """Subspace of F^n stored by its reduced column echelon basis.

    The basis columns are the transposed nonzero rows of the RREF of any
    spanning set, so equal subspaces carry identical bases.
    """
    __slots__ = ("field", "ambient_dim", "basis", "pivots")

    def __init__(self, field: FieldSpec, ambient_dim: int, basis: Mat, pivots: Tuple[int, ...]):
        self.field = field
        self.ambient_dim = ambient_dim
        self.basis = basis
        self.pivots = pivots

    @classmethod
    def span(cls, field: FieldSpec, ambient_dim: int, vectors: Mat) -> "Subspace":
        """Span of the columns of an ambient_dim × k matrix."""
        if vectors.n_rows != ambient_dim:
            raise DimensionMismatchError(f"Vectors of length {vectors.n_rows} in F^{ambient_dim}")
        rows, pivots = _rref(vectors.transpose())
        kept = rows[:len(pivots)]
        basis = Mat(field, len(kept), ambient_dim, kept).transpose()
        return cls(field, ambient_dim, basis, pivots)

    @classmethod
    def zero(cls, field: FieldSpec, ambient_dim: int) -> "Subspace":
        return cls(field, ambient_dim, Mat.zeros(field, ambient_dim, 0), ())

    @classmethod
    def full(cls, field: FieldSpec, ambient_dim: int) -> "Subspace":
        return cls(field, ambient_dim, Mat.identity(field, ambient_dim), tuple(range(ambient_dim)))

    @property
    def dim(self) -> int:
        return self.basis.n_cols

    @property
    def codim(self) -> int:
        return self.ambient_dim - self.dim

    @property
    def is_full(self) -> bool:
        return self.dim == self.ambient_dim

    def contains(self, vectors: Mat) -> bool:
        """True iff every column of vectors lies in the subspace."""
        if vectors.n_cols == 0:
            return True
        joined = hstack(self.basis, vectors)
        return rank(joined) == self.dim

    def contains_subspace(self, other: "Subspace") -> bool:
        return self.contains(other.basis)

    def annihilator(self) -> Mat:
        """Matrix Q with rows spanning the functionals vanishing on the subspace (so self = ker Q)."""
        null = kernel(self.basis.transpose())
        return null.basis.transpose()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Subspace):
            return NotImplemented
        return self.field == other.field and self.ambient_dim == other.ambient_dim and self.basis == other.basis

    def __hash__(self):
        return hash((self.ambient_dim, self.basis))

    def __repr__(self) -> str:
        return f"Subspace(dim={self.dim}, ambient={self.ambient_dim})"


def hstack(*mats: Mat) -> Mat:
    field = mats[0].field
    _check_same_field(*(m.field for m in mats))
    n_rows = mats[0].n_rows
    if any(m.n_rows != n_rows for m in mats):
        raise DimensionMismatchError("hstack needs equal row counts")
    rows = [[x for m in mats for x in m._rows[i]] for i in range(n_rows)]
    return Mat(field, n_rows, sum(m.n_cols for m in mats), rows)


def vstack(*mats: Mat) -> Mat:
    field = mats[0].field
    _check_same_field(*(m.field for m in mats))
    n_cols = mats[0].n_cols
    if any(m.n_cols != n_cols for m in mats):
        raise DimensionMismatchError("vstack needs equal column counts")
    rows = [list(row) for m in mats for row in m._rows]
    return Mat(field, len(rows), n_cols, rows)


def kernel(A: Mat) -> Subspace:
    """Null space {v : Av = 0} in canonical form."""
    field, n = A.field, A.n_cols
    rows, pivots = _rref(A)
    pivot_set = set(pivots)
    free = [j for j in range(n) if j not in pivot_set]
    if not free:
        return Subspace.zero(field, n)
    domain = field.domain
    vectors = [[domain.zero] * len(free) for _ in range(n)]
    for col, f in enumerate(free):
        vectors[f][col] = domain.one
        for i, p in enumerate(pivots):
            vectors[p][col] = -rows[i][f]
    return Subspace.span(field, n, Mat(field, n, len(free), vectors))


def image(A: Mat) -> Subspace:
    return Subspace.span(A.field, A.n_rows, A)


def preimage(B: Mat, U: Subspace) -> Subspace:
    """{v : Bv ∈ U}."""
    if U.ambient_dim != B.n_rows:
        raise DimensionMismatchError(f"Subspace of F^{U.ambient_dim} pulled back along a {B.shape} matrix")
    _check_same_field(B.field, U.field)
    if U.is_full:
        return Subspace.full(B.field, B.n_cols)
    return kernel(U.annihilator() @ B)


def intersect(U: Subspace, V: Subspace) -> Subspace:
    if U.ambient_dim != V.ambient_dim:
        raise DimensionMismatchError(f"Cannot intersect subspaces of F^{U.ambient_dim} and F^{V.ambient_dim}")
    _check_same_field(U.field, V.field)
    if U.is_full:
        return V
    if V.is_full:
        return U
    return kernel(vstack(U.annihilator(), V.annihilator()))


def intersect_all(spaces: Sequence[Subspace], field: FieldSpec, ambient_dim: int) -> Subspace:
    result = Subspace.full(field, ambient_dim)
    for space in spaces:
        result = intersect(result, space)
    return result


def span_sum(U: Subspace, V: Subspace) -> Subspace:
    if U.ambient_dim != V.ambient_dim:
        raise DimensionMismatchError("Subspaces live in different ambient spaces")
    return Subspace.span(U.field, U.ambient_dim, hstack(U.basis, V.basis))


def independent_prefix(columns: Mat, start: Optional[Mat] = None) -> List[int]:
    """Indices of columns that, scanned left to right, enlarge the span of start plus earlier picks."""
    base = 0 if start is None else start.n_cols
    joined = columns if start is None else hstack(start, columns)
    _, pivots = _rref(joined)
    return [p - base for p in pivots if p >= base]


def extend_columns(columns: Mat) -> Mat:
    """Append standard vectors e_1, e_2, ... (first fit) until the columns form a basis.

    The input columns must be linearly independent.
    """
    n = columns.n_rows
    if rank(columns) != columns.n_cols:
        raise DimensionMismatchError("extend_columns needs linearly independent columns")
    picks = independent_prefix(Mat.identity(columns.field, n), start=columns)
    return hstack(columns, Mat.identity(columns.field, n).select_columns(picks))


def complete_basis(U: Subspace) -> Mat:
    """Invertible matrix whose first dim(U) columns are U's canonical basis."""
    return extend_columns(U.basis)


def direct_sum(*mats: Mat) -> Mat:
    """Block diagonal matrix; 0×0 blocks are neutral."""
    if not mats:
        raise ValueError("direct_sum needs at least one block")
    field = mats[0].field
    _check_same_field(*(m.field for m in mats))
    n_rows = sum(m.n_rows for m in mats)
    n_cols = sum(m.n_cols for m in mats)
    zero = field.domain.zero
    rows = [[zero] * n_cols for _ in range(n_rows)]
    r0 = c0 = 0
    for m in mats:
        for i, row in enumerate(m._rows):
            rows[r0 + i][c0:c0 + m.n_cols] = row
        r0 += m.n_rows
        c0 += m.n_cols
    return Mat(field, n_rows, n_cols, rows)


def kronecker(A: Mat, B: Mat) -> Mat:
    """Block matrix (a_ij B)."""
    _check_same_field(A.field, B.field)
    rows = []
    for ra in A._rows:
        for rb in B._rows:
            rows.append([a * b for a in ra for b in rb])
    return Mat(A.field, A.n_rows * B.n_rows, A.n_cols * B.n_cols, rows)


def inverse(A: Mat) -> Mat:
    n = A.size
    if n == 0:
        return A
    rows, pivots = _rref(hstack(A, Mat.identity(A.field, n)))
    if pivots[:n] != tuple(range(n)):
        raise SingularMatrixError(f"Matrix of size {n} is singular (rank {rank(A)})")
    return Mat(A.field, n, n, [row[n:] for row in rows])


def resize(A: Mat, n: int) -> Mat:
    """Pad A with zero rows/columns or crop it to its top-left n×n block."""
    size = A.size
    if n <= size:
        return A.block(0, n, 0, n)
    return direct_sum(A, Mat.zeros(A.field, n - size))


def hat_dist(A: Mat, B: Mat) -> int:
    """Rank of the difference after padding both matrices to the larger size."""
    _check_same_field(A.field, B.field)
    n = max(A.size, B.size)
    return rank(resize(A, n) - resize(B, n))


def conjugate(P: Mat, A: Mat, P_inv: Optional[Mat] = None) -> Mat:
    """P A P⁻¹."""
    if P_inv is None:
        P_inv = inverse(P)
    return P @ A @ P_inv


def permutation_matrix(field: FieldSpec, targets: Sequence[int]) -> Mat:
    """Matrix sending e_i to e_{targets[i]}, so P X P⁻¹ moves index i of X to targets[i]."""
    n = len(targets)
    if sorted(targets) != list(range(n)):
        raise ValueError("targets must be a permutation of range(n)")
    zero, one = field.domain.zero, field.domain.one
    rows = [[zero] * n for _ in range(n)]
    for i, t in enumerate(targets):
        rows[t][i] = one
    return Mat(field, n, n, rows)
