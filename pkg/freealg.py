from typing import List, Dict, Optional, Any, Tuple, Sequence, Union, Iterator
from dataclasses import dataclass, field as dc_field
from enum import Enum
from fractions import Fraction
import logging
import re

from exactmat import (
    FieldSpec, Mat, RATIONALS, FieldMismatchError, DimensionMismatchError,
    direct_sum, resize, kronecker, inverse,
)

logger = logging.getLogger(__name__)

Word = Tuple[int, ...]
# A bracket tree is a generator index or a pair (left, right) standing for [left, right].
BracketTree = Union[int, Tuple[Any, Any]]
# A group word is a sequence of (generator index, nonzero exponent).
GroupWord = Tuple[Tuple[int, int], ...]


class PresentationSyntaxError(ValueError):
    """DSL error carrying a 1-based source position."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        self.reason = message
        super().__init__(f"line {line}, column {column}: {message}")


class ArityMismatchError(ValueError):
    """A tuple or polynomial does not match the number of generators."""


class NcPoly:
    """Noncommutative polynomial: a map from words over range(arity) to nonzero coefficients.

    Coefficients are canonical field values (Fraction for Q, int for Fp).
    The empty word is the constant monomial.
    """
    __slots__ = ("field", "arity", "terms")

    def __init__(self, field: FieldSpec, arity: int, terms: Optional[Dict[Sequence[int], Any]] = None):
        self.field = field
        self.arity = arity
        cleaned: Dict[Word, Any] = {}
        for word, coeff in (terms or {}).items():
            word = tuple(word)
            for index in word:
                if not 0 <= index < arity:
                    raise ArityMismatchError(f"Generator index {index} outside arity {arity}")
            value = field.coerce(coeff)
            if value != 0:
                cleaned[word] = value
        self.terms = cleaned

    @classmethod
    def zero(cls, field: FieldSpec, arity: int) -> "NcPoly":
        return cls(field, arity)

    @classmethod
    def constant(cls, field: FieldSpec, arity: int, value=1) -> "NcPoly":
        return cls(field, arity, {(): value})

    @classmethod
    def generator(cls, field: FieldSpec, arity: int, index: int) -> "NcPoly":
        return cls(field, arity, {(index,): 1})

    @classmethod
    def monomial(cls, field: FieldSpec, arity: int, word: Sequence[int], coeff=1) -> "NcPoly":
        return cls(field, arity, {tuple(word): coeff})

    @property
    def monomial_count(self) -> int:
        return len(self.terms)

    @property
    def max_degree(self) -> int:
        return max((len(w) for w in self.terms), default=0)

    @property
    def constant_term(self):
        return self.terms.get((), self.field.zero())

    @property
    def has_zero_constant(self) -> bool:
        return () not in self.terms

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def _check(self, other: "NcPoly"):
        if self.field != other.field:
            raise FieldMismatchError(f"Polynomials over {self.field} and {other.field}")
        if self.arity != other.arity:
            raise ArityMismatchError(f"Polynomials of arity {self.arity} and {other.arity}")

    def _combine(self, other: "NcPoly", sign: int) -> "NcPoly":
        self._check(other)
        terms = dict(self.terms)
        for word, coeff in other.terms.items():
            terms[word] = self.field.coerce(terms.get(word, 0) + sign * coeff)
        return NcPoly(self.field, self.arity, terms)

    def __add__(self, other: "NcPoly") -> "NcPoly":
        return self._combine(other, 1)

    def __sub__(self, other: "NcPoly") -> "NcPoly":
        return self._combine(other, -1)

    def __neg__(self) -> "NcPoly":
        return self.scale(-1)

    def scale(self, value) -> "NcPoly":
        c = self.field.coerce(value)
        return NcPoly(self.field, self.arity, {w: self.field.coerce(c * v) for w, v in self.terms.items()})

    def __mul__(self, other) -> "NcPoly":
        if not isinstance(other, NcPoly):
            return self.scale(other)
        self._check(other)
        terms: Dict[Word, Any] = {}
        for w1, c1 in self.terms.items():
            for w2, c2 in other.terms.items():
                word = w1 + w2
                terms[word] = self.field.coerce(terms.get(word, 0) + c1 * c2)
        return NcPoly(self.field, self.arity, terms)

    def __rmul__(self, other) -> "NcPoly":
        return self.scale(other)

    def power(self, k: int) -> "NcPoly":
        result = NcPoly.constant(self.field, self.arity)
        for _ in range(k):
            result = result * self
        return result

    @staticmethod
    def bracket(a: "NcPoly", b: "NcPoly") -> "NcPoly":
        return a * b - b * a

    def embed(self, arity: int, offset: int = 0) -> "NcPoly":
        """Same polynomial with generator i renamed to i + offset inside a larger arity."""
        return NcPoly(self.field, arity, {tuple(i + offset for i in w): c for w, c in self.terms.items()})

    def substitute(self, images: Sequence["NcPoly"]) -> "NcPoly":
        """Replace generator i by images[i]; the result has the images' arity."""
        if len(images) != self.arity:
            raise ArityMismatchError(f"{len(images)} substitutions for arity {self.arity}")
        if not images:
            raise ArityMismatchError("Cannot substitute into a polynomial without generators")
        target = images[0].arity
        result = NcPoly.zero(self.field, target)
        for word, coeff in self.terms.items():
            term = NcPoly.constant(self.field, target, coeff)
            for index in word:
                term = term * images[index]
            result = result + term
        return result

    def sorted_terms(self) -> List[Tuple[Word, Any]]:
        return sorted(self.terms.items(), key=lambda item: (-len(item[0]), item[0]))

    def format(self, names: Sequence[str]) -> str:
        parts = [("*".join(names[i] for i in word), coeff) for word, coeff in self.sorted_terms()]
        return _format_linear(self.field, parts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, NcPoly):
            return NotImplemented
        return self.field == other.field and self.arity == other.arity and self.terms == other.terms

    def __hash__(self):
        return hash((self.field, self.arity, frozenset(self.terms.items())))

    def __repr__(self) -> str:
        return f"NcPoly({self.format([f'x{i + 1}' for i in range(self.arity)])})"


def _format_linear(field: FieldSpec, parts: List[Tuple[str, Any]]) -> str:
    """Render sum of coeff*label terms; an empty label is the constant monomial."""
    if not parts:
        return "0"
    out = []
    for position, (label, coeff) in enumerate(parts):
        negative = field.is_rational and coeff < 0
        magnitude = -coeff if negative else coeff
        if not label:
            body = field.format(magnitude)
        elif magnitude == 1:
            body = label
        else:
            body = f"{field.format(magnitude)}*{label}"
        if position == 0:
            out.append(f"-{body}" if negative else body)
        else:
            out.append(f" - {body}" if negative else f" + {body}")
    return "".join(out)


def _format_tree(tree: BracketTree, names: Sequence[str]) -> str:
    if isinstance(tree, int):
        return names[tree]
    return f"[{_format_tree(tree[0], names)},{_format_tree(tree[1], names)}]"


class LiePoly:
    """Linear combination of bracket trees (a Lie relator before expansion)."""
    __slots__ = ("field", "arity", "terms")

    def __init__(self, field: FieldSpec, arity: int, terms: Optional[Dict[BracketTree, Any]] = None):
        self.field = field
        self.arity = arity
        cleaned = {}
        for tree, coeff in (terms or {}).items():
            _check_tree(tree, arity)
            value = field.coerce(coeff)
            if value != 0:
                cleaned[tree] = value
        self.terms = cleaned

    @classmethod
    def generator(cls, field: FieldSpec, arity: int, index: int) -> "LiePoly":
        return cls(field, arity, {index: 1})

    @classmethod
    def zero(cls, field: FieldSpec, arity: int) -> "LiePoly":
        return cls(field, arity)

    def __add__(self, other: "LiePoly") -> "LiePoly":
        terms = dict(self.terms)
        for tree, coeff in other.terms.items():
            terms[tree] = self.field.coerce(terms.get(tree, 0) + coeff)
        return LiePoly(self.field, self.arity, terms)

    def __neg__(self) -> "LiePoly":
        return self.scale(-1)

    def __sub__(self, other: "LiePoly") -> "LiePoly":
        return self + (-other)

    def scale(self, value) -> "LiePoly":
        c = self.field.coerce(value)
        return LiePoly(self.field, self.arity, {t: self.field.coerce(c * v) for t, v in self.terms.items()})

    @staticmethod
    def bracket(a: "LiePoly", b: "LiePoly") -> "LiePoly":
        terms: Dict[BracketTree, Any] = {}
        for ta, ca in a.terms.items():
            for tb, cb in b.terms.items():
                tree = (ta, tb)
                terms[tree] = a.field.coerce(terms.get(tree, 0) + ca * cb)
        return LiePoly(a.field, a.arity, terms)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def format(self, names: Sequence[str]) -> str:
        parts = sorted(((_format_tree(t, names), c) for t, c in self.terms.items()),
                       key=lambda item: (-item[0].count("["), item[0]))
        return _format_linear(self.field, parts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LiePoly):
            return NotImplemented
        return self.field == other.field and self.arity == other.arity and self.terms == other.terms

    def __hash__(self):
        return hash((self.field, self.arity, frozenset(self.terms.items())))

    def __repr__(self) -> str:
        return f"LiePoly({self.format([f'x{i + 1}' for i in range(self.arity)])})"


def _check_tree(tree: BracketTree, arity: int):
    if isinstance(tree, int):
        if not 0 <= tree < arity:
            raise ArityMismatchError(f"Generator index {tree} outside arity {arity}")
        return
    _check_tree(tree[0], arity)
    _check_tree(tree[1], arity)


def _expand_tree(tree: BracketTree, field: FieldSpec, arity: int) -> NcPoly:
    if isinstance(tree, int):
        return NcPoly.generator(field, arity, tree)
    return NcPoly.bracket(_expand_tree(tree[0], field, arity), _expand_tree(tree[1], field, arity))


def lie_expand(p: LiePoly) -> NcPoly:
    """Associative expansion using [a,b] = ab - ba."""
    result = NcPoly.zero(p.field, p.arity)
    for tree, coeff in p.terms.items():
        result = result + _expand_tree(tree, p.field, p.arity).scale(coeff)
    return result


class Flavor(str, Enum):
    ASSOCIATIVE = "algebra"
    LIE = "lie"


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_']*\Z")
_KEYWORDS = {"algebra", "lie", "group", "gens", "rels"}


def _check_names(names: Sequence[str]):
    if len(set(names)) != len(names):
        raise ValueError(f"Duplicate generator names: {list(names)}")
    for name in names:
        if not _IDENT.match(name) or name in _KEYWORDS:
            raise ValueError(f"Invalid generator name: {name!r}")


@dataclass(frozen=True)
class Presentation:
    """Finite presentation F<x_1..x_d>/<P_1..P_r>, associative or Lie flavored."""
    field: FieldSpec
    generator_names: Tuple[str, ...]
    relators: Tuple[Union[NcPoly, LiePoly], ...]
    flavor: Flavor = Flavor.ASSOCIATIVE

    def __post_init__(self):
        object.__setattr__(self, "generator_names", tuple(self.generator_names))
        object.__setattr__(self, "relators", tuple(self.relators))
        _check_names(self.generator_names)
        expected = LiePoly if self.flavor == Flavor.LIE else NcPoly
        for relator in self.relators:
            if not isinstance(relator, expected):
                raise TypeError(f"{self.flavor.value} presentations take {expected.__name__} relators")
            if relator.arity != self.arity:
                raise ArityMismatchError(f"Relator of arity {relator.arity} in a presentation with {self.arity} generators")
            if relator.field != self.field:
                raise FieldMismatchError(f"Relator over {relator.field} in a presentation over {self.field}")

    @property
    def arity(self) -> int:
        return len(self.generator_names)

    @property
    def relator_count(self) -> int:
        return len(self.relators)

    def associative_relators(self) -> List[NcPoly]:
        if self.flavor == Flavor.LIE:
            return [lie_expand(r) for r in self.relators]
        return list(self.relators)

    @property
    def max_degree(self) -> int:
        return max((r.max_degree for r in self.associative_relators()), default=0)

    @property
    def has_zero_constants(self) -> bool:
        return all(r.has_zero_constant for r in self.associative_relators())

    def index(self, name: str) -> int:
        return self.generator_names.index(name)

    def generator(self, name: str) -> NcPoly:
        return NcPoly.generator(self.field, self.arity, self.index(name))


def enveloping_presentation(P: Presentation) -> Presentation:
    """Associative presentation of the universal enveloping algebra of a Lie presentation."""
    if P.flavor == Flavor.ASSOCIATIVE:
        return P
    return Presentation(P.field, P.generator_names, tuple(P.associative_relators()))


@dataclass(frozen=True)
class MatTuple:
    """Ordered tuple of square matrices sharing a field and a size."""
    field: FieldSpec
    n: int
    mats: Tuple[Mat, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mats", tuple(self.mats))
        for mat in self.mats:
            if mat.field != self.field:
                raise FieldMismatchError(f"Matrix over {mat.field} in a tuple over {self.field}")
            if mat.shape != (self.n, self.n):
                raise DimensionMismatchError(f"Matrix of shape {mat.shape} in a tuple of size {self.n}")

    @classmethod
    def of(cls, mats: Sequence[Mat], field: Optional[FieldSpec] = None, n: Optional[int] = None) -> "MatTuple":
        mats = list(mats)
        if mats:
            field = field or mats[0].field
            n = mats[0].size if n is None else n
        if field is None or n is None:
            raise ValueError("An empty tuple needs an explicit field and size")
        return cls(field, n, tuple(mats))

    @property
    def arity(self) -> int:
        return len(self.mats)

    def __len__(self) -> int:
        return len(self.mats)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return MatTuple(self.field, self.n, self.mats[index])
        return self.mats[index]

    def __iter__(self) -> Iterator[Mat]:
        return iter(self.mats)

    def concat(self, other: "MatTuple") -> "MatTuple":
        if other.n != self.n or other.field != self.field:
            raise DimensionMismatchError("Concatenated tuples must share field and size")
        return MatTuple(self.field, self.n, self.mats + other.mats)

    def conjugate(self, P: Mat, P_inv: Optional[Mat] = None) -> "MatTuple":
        """Simultaneous conjugation A_i ↦ P A_i P⁻¹."""
        P_inv = inverse(P) if P_inv is None else P_inv
        return MatTuple(self.field, P.size, tuple(P @ A @ P_inv for A in self.mats))

    def direct_sum(self, other: "MatTuple") -> "MatTuple":
        if other.arity != self.arity:
            raise ArityMismatchError(f"Direct sum of arities {self.arity} and {other.arity}")
        return MatTuple(self.field, self.n + other.n,
                        tuple(direct_sum(a, b) for a, b in zip(self.mats, other.mats)))

    def resize(self, n: int) -> "MatTuple":
        return MatTuple(self.field, n, tuple(resize(A, n) for A in self.mats))

    def tensor_identity(self, q: int) -> "MatTuple":
        """A_i ↦ A_i ⊗ Id_q."""
        eye = Mat.identity(self.field, q)
        return MatTuple(self.field, self.n * q, tuple(kronecker(A, eye) for A in self.mats))

    def identity_tensor(self, q: int) -> "MatTuple":
        """A_i ↦ Id_q ⊗ A_i."""
        eye = Mat.identity(self.field, q)
        return MatTuple(self.field, self.n * q, tuple(kronecker(eye, A) for A in self.mats))


def _check_tuple(P_arity: int, field: FieldSpec, T: MatTuple):
    if T.arity != P_arity:
        raise ArityMismatchError(f"Tuple of arity {T.arity} for {P_arity} generators")
    if T.field != field:
        raise FieldMismatchError(f"Tuple over {T.field} for a presentation over {field}")


def evaluate_many(polys: Sequence[NcPoly], T: MatTuple) -> List[Mat]:
    """Evaluate several polynomials at T, sharing word products between them."""
    cache: Dict[Word, Mat] = {(): Mat.identity(T.field, T.n)}

    def product(word: Word) -> Mat:
        if word not in cache:
            cache[word] = T[word[0]] @ product(word[1:])
        return cache[word]

    results = []
    for p in polys:
        _check_tuple(p.arity, p.field, T)
        total = Mat.zeros(T.field, T.n)
        for word, coeff in p.terms.items():
            total = total + product(word).scale(coeff)
        results.append(total)
    return results


def evaluate(p: NcPoly, T: MatTuple) -> Mat:
    """p(A_1, ..., A_d); scalars act as multiples of the identity."""
    return evaluate_many([p], T)[0]


@dataclass(frozen=True)
class GroupPresentation:
    """Group presentation <x_1..x_d | Q_1..Q_r> with words over x_i^{±1}."""
    field: FieldSpec
    generator_names: Tuple[str, ...]
    relator_words: Tuple[GroupWord, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "generator_names", tuple(self.generator_names))
        object.__setattr__(self, "relator_words",
                           tuple(tuple((int(g), int(e)) for g, e in w) for w in self.relator_words))
        _check_names(self.generator_names)
        for word in self.relator_words:
            for g, e in word:
                if not 0 <= g < self.arity or e == 0:
                    raise ArityMismatchError(f"Bad letter ({g}, {e}) in a group word over {self.arity} generators")

    @property
    def arity(self) -> int:
        return len(self.generator_names)

    def algebra(self) -> Presentation:
        return group_algebra_presentation(self.generator_names, self.relator_words, self.field)

    def evaluate_word(self, word: GroupWord, mats: Sequence[Mat], inverses: Sequence[Mat]) -> Mat:
        n = mats[0].size if mats else 0
        result = Mat.identity(self.field, n)
        for g, e in word:
            factor = mats[g] if e > 0 else inverses[g]
            for _ in range(abs(e)):
                result = result @ factor
        return result

    def format_word(self, word: GroupWord) -> str:
        if not word:
            return "1"
        return "*".join(self.generator_names[g] if e == 1 else f"{self.generator_names[g]}^{e}" for g, e in word)


def _fresh(name: str, taken: set, prefix: str = "_") -> str:
    while name in taken:
        name = prefix + name
    return name


def group_algebra_presentation(gens: Sequence[str], relator_words: Sequence[GroupWord],
                               field: FieldSpec = RATIONALS) -> Presentation:
    """Presentation of F[G]: generators x_i, y_i with y_i standing for x_i^{-1}.

    Relators are Q_i - 1 for each group relator, then x_j y_j - 1 and y_j x_j - 1.
    """
    gens = list(gens)
    d = len(gens)
    taken = set(gens)
    inverse_names = []
    for name in gens:
        inv = _fresh(f"{name}'", taken, prefix="i")
        taken.add(inv)
        inverse_names.append(inv)
    arity = 2 * d
    one = NcPoly.constant(field, arity)
    relators = []
    for word in relator_words:
        letters: List[int] = []
        for g, e in word:
            letters.extend([g if e > 0 else d + g] * abs(e))
        relators.append(NcPoly.monomial(field, arity, letters) - one)
    for j in range(d):
        relators.append(NcPoly.monomial(field, arity, (j, d + j)) - one)
        relators.append(NcPoly.monomial(field, arity, (d + j, j)) - one)
    return Presentation(field, tuple(gens + inverse_names), tuple(relators))


def _disjoint_names(left: Sequence[str], right: Sequence[str], prefix: str = "r_") -> List[str]:
    taken = set(left)
    renamed = []
    for name in right:
        new = _fresh(name, taken, prefix=prefix)
        taken.add(new)
        renamed.append(new)
    return renamed


def _same_field(P: Presentation, Q: Presentation) -> FieldSpec:
    if P.field != Q.field:
        raise FieldMismatchError(f"Presentations over {P.field} and {Q.field}")
    return P.field


def direct_product_presentation(P: Presentation, Q: Presentation) -> Presentation:
    """Presentation of A x B: generators x, y, e1, e2 with the idempotent splitting relators."""
    field = _same_field(P, Q)
    d, t = P.arity, Q.arity
    right = _disjoint_names(P.generator_names, Q.generator_names)
    taken = set(P.generator_names) | set(right)
    e1_name = _fresh("e1", taken)
    e2_name = _fresh("e2", taken | {e1_name})
    arity = d + t + 2
    e1 = NcPoly.generator(field, arity, d + t)
    e2 = NcPoly.generator(field, arity, d + t + 1)
    one = NcPoly.constant(field, arity)
    relators = [e1 * p.embed(arity) for p in P.associative_relators()]
    relators += [e2 * q.embed(arity, d) for q in Q.associative_relators()]
    for i in range(d):
        x = NcPoly.generator(field, arity, i)
        relators += [e1 * x - x, x * e1 - x]
    for i in range(t):
        y = NcPoly.generator(field, arity, d + i)
        relators += [e2 * y - y, y * e2 - y]
    relators += [e1 + e2 - one, e1 * e1 - e1, e2 * e2 - e2]
    names = tuple(P.generator_names) + tuple(right) + (e1_name, e2_name)
    return Presentation(field, names, tuple(relators))


def unit_names(m: int, taken: Sequence[str] = ()) -> List[str]:
    taken = set(taken)
    names = []
    for i in range(m):
        for j in range(m):
            base = f"e{i + 1}{j + 1}" if m < 10 else f"e{i + 1}_{j + 1}"
            name = _fresh(base, taken)
            taken.add(name)
            names.append(name)
    return names


def matrix_algebra_presentation(P: Presentation, m: int) -> Presentation:
    """Presentation of M_m(A): generators x then units e_ij (row-major)."""
    if m < 1:
        raise ValueError("Matrix algebra size m must be at least 1")
    field = P.field
    d = P.arity
    arity = d + m * m
    units = [[NcPoly.generator(field, arity, d + i * m + j) for j in range(m)] for i in range(m)]
    relators = [p.embed(arity) for p in P.associative_relators()]
    for i in range(m):
        for j in range(m):
            for k in range(m):
                for l in range(m):
                    rel = units[i][j] * units[k][l]
                    if j == k:
                        rel = rel - units[i][l]
                    relators.append(rel)
    trace = NcPoly.zero(field, arity)
    for i in range(m):
        trace = trace + units[i][i]
    relators.append(trace - NcPoly.constant(field, arity))
    for i in range(m):
        for j in range(m):
            for k in range(d):
                relators.append(NcPoly.bracket(units[i][j], NcPoly.generator(field, arity, k)))
    names = tuple(P.generator_names) + tuple(unit_names(m, P.generator_names))
    return Presentation(field, names, tuple(relators))


def matrix_units_presentation(m: int, field: FieldSpec = RATIONALS) -> Presentation:
    """The matrix-unit presentation of M_m(F)."""
    return matrix_algebra_presentation(Presentation(field, (), ()), m)


def free_product_presentation(P: Presentation, Q: Presentation) -> Presentation:
    field = _same_field(P, Q)
    d = P.arity
    right = _disjoint_names(P.generator_names, Q.generator_names)
    arity = d + Q.arity
    relators = [p.embed(arity) for p in P.associative_relators()]
    relators += [q.embed(arity, d) for q in Q.associative_relators()]
    return Presentation(field, tuple(P.generator_names) + tuple(right), tuple(relators))


# --- presentation DSL ---

_TOKEN_SPEC = [
    ("COMMENT", r"#[^\n]*"),
    ("NEWLINE", r"\n"),
    ("SPACE", r"[ \t\r]+"),
    ("NUMBER", r"\d+"),
    ("IDENT", r"[A-Za-z_][A-Za-z0-9_']*"),
    ("PUNCT", r"[;,()\[\]+\-*/^]"),
    ("BAD", r"."),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in _TOKEN_SPEC))


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    line, line_start = 1, 0
    for match in _TOKEN_RE.finditer(text):
        kind = match.lastgroup
        column = match.start() - line_start + 1
        if kind == "NEWLINE":
            line += 1
            line_start = match.end()
            continue
        if kind in ("SPACE", "COMMENT"):
            continue
        if kind == "BAD":
            raise PresentationSyntaxError(f"unexpected character {match.group()!r}", line, column)
        tokens.append(_Token(kind, match.group(), line, column))
    tokens.append(_Token("EOF", "", line, len(text) - line_start + 1))
    return tokens


@dataclass
class _Node:
    kind: str  # num | gen | add | mul | bracket | pow
    token: _Token
    value: Any = None
    children: List[Any] = dc_field(default_factory=list)


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.names: List[str] = []

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def error(self, message: str, token: Optional[_Token] = None):
        token = token or self.current
        raise PresentationSyntaxError(message, token.line, token.column)

    def advance(self) -> _Token:
        token = self.current
        self.pos += 1
        return token

    def accept(self, text: str) -> bool:
        if self.current.kind in ("PUNCT", "IDENT") and self.current.text == text:
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> _Token:
        token = self.current
        if not self.accept(text):
            self.error(f"expected {text!r}, found {token.text or 'end of input'!r}")
        return token

    def expect_kind(self, kind: str, what: str) -> _Token:
        if self.current.kind != kind:
            self.error(f"expected {what}, found {self.current.text or 'end of input'!r}")
        return self.advance()

    def header(self) -> Tuple[str, FieldSpec]:
        token = self.current
        if token.kind != "IDENT" or token.text not in ("algebra", "lie", "group"):
            self.error("expected 'algebra', 'lie' or 'group'")
        self.advance()
        field_token = self.expect_kind("IDENT", "a field ('Q' or 'Fp(p)')")
        if field_token.text == "Q":
            field = RATIONALS
        elif field_token.text == "Fp":
            self.expect("(")
            p_token = self.expect_kind("NUMBER", "a prime modulus")
            self.expect(")")
            try:
                field = FieldSpec.prime(int(p_token.text))
            except ValueError as e:
                self.error(str(e), p_token)
        else:
            self.error(f"unknown field {field_token.text!r}", field_token)
        self.expect(";")
        return token.text, field

    def generators(self):
        self.expect("gens")
        if self.current.text != ";":
            while True:
                token = self.expect_kind("IDENT", "a generator name")
                if token.text in _KEYWORDS:
                    self.error(f"{token.text!r} is a keyword", token)
                if token.text in self.names:
                    self.error(f"generator {token.text!r} declared twice", token)
                self.names.append(token.text)
                if not self.accept(","):
                    break
        self.expect(";")

    def relators(self) -> List[_Node]:
        self.expect("rels")
        nodes = []
        if self.current.text != ";":
            while True:
                nodes.append(self.expr())
                if not self.accept(","):
                    break
        self.expect(";")
        if self.current.kind != "EOF":
            self.error(f"unexpected {self.current.text!r} after relators")
        return nodes

    def expr(self) -> _Node:
        start = self.current
        terms = []
        sign = 1
        if self.current.text in ("+", "-"):
            sign = -1 if self.advance().text == "-" else 1
        terms.append((sign, self.term()))
        while self.current.text in ("+", "-"):
            sign = -1 if self.advance().text == "-" else 1
            terms.append((sign, self.term()))
        if len(terms) == 1 and terms[0][0] == 1:
            return terms[0][1]
        return _Node("add", start, children=terms)

    def term(self) -> _Node:
        node = self.factor()
        while self.current.text == "*":
            token = self.advance()
            node = _Node("mul", token, children=[node, self.factor()])
        return node

    def factor(self) -> _Node:
        node = self.atom()
        if self.current.text == "^":
            token = self.advance()
            negative = self.accept("-")
            exponent = int(self.expect_kind("NUMBER", "an exponent").text)
            node = _Node("pow", token, value=-exponent if negative else exponent, children=[node])
        return node

    def atom(self) -> _Node:
        token = self.current
        if token.kind == "NUMBER":
            self.advance()
            value = Fraction(int(token.text))
            if self.current.text == "/":
                self.advance()
                denominator = self.expect_kind("NUMBER", "a denominator")
                if int(denominator.text) == 0:
                    self.error("division by zero", denominator)
                value = value / int(denominator.text)
            return _Node("num", token, value=value)
        if token.kind == "IDENT":
            self.advance()
            if token.text not in self.names:
                self.error(f"undeclared generator {token.text!r}", token)
            return _Node("gen", token, value=self.names.index(token.text))
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        if self.accept("["):
            left = self.expr()
            self.expect(",")
            right = self.expr()
            self.expect("]")
            return _Node("bracket", token, children=[left, right])
        self.error(f"unexpected {token.text or 'end of input'!r}")


def _to_ncpoly(node: _Node, field: FieldSpec, arity: int) -> NcPoly:
    if node.kind == "num":
        return NcPoly.constant(field, arity, _field_value(node, field))
    if node.kind == "gen":
        return NcPoly.generator(field, arity, node.value)
    if node.kind == "add":
        result = NcPoly.zero(field, arity)
        for sign, child in node.children:
            term = _to_ncpoly(child, field, arity)
            result = result + term if sign > 0 else result - term
        return result
    if node.kind == "mul":
        return _to_ncpoly(node.children[0], field, arity) * _to_ncpoly(node.children[1], field, arity)
    if node.kind == "bracket":
        return NcPoly.bracket(_to_ncpoly(node.children[0], field, arity), _to_ncpoly(node.children[1], field, arity))
    if node.value < 0:
        raise PresentationSyntaxError("negative powers are only allowed in group presentations",
                                      node.token.line, node.token.column)
    return _to_ncpoly(node.children[0], field, arity).power(node.value)


def _field_value(node: _Node, field: FieldSpec):
    try:
        return field.coerce(node.value)
    except ValueError as e:
        raise PresentationSyntaxError(str(e), node.token.line, node.token.column)


def _scalar_value(node: _Node) -> Optional[Fraction]:
    """Value of a generator-free subexpression, or None."""
    if node.kind == "num":
        return node.value
    if node.kind == "add":
        total = Fraction(0)
        for sign, child in node.children:
            value = _scalar_value(child)
            if value is None:
                return None
            total += sign * value
        return total
    if node.kind == "mul":
        left, right = (_scalar_value(c) for c in node.children)
        return None if left is None or right is None else left * right
    return None


def _to_liepoly(node: _Node, field: FieldSpec, arity: int) -> LiePoly:
    if node.kind == "num":
        if node.value == 0:
            return LiePoly.zero(field, arity)
        raise PresentationSyntaxError("Lie relator with constant term", node.token.line, node.token.column)
    if node.kind == "gen":
        return LiePoly.generator(field, arity, node.value)
    if node.kind == "add":
        result = LiePoly.zero(field, arity)
        for sign, child in node.children:
            term = _to_liepoly(child, field, arity)
            result = result + term if sign > 0 else result - term
        return result
    if node.kind == "mul":
        left, right = node.children
        for scalar_node, other in ((left, right), (right, left)):
            value = _scalar_value(scalar_node)
            if value is not None:
                return _to_liepoly(other, field, arity).scale(_field_value(_Node("num", scalar_node.token, value), field))
        raise PresentationSyntaxError("products are not Lie expressions; write [a,b]",
                                      node.token.line, node.token.column)
    if node.kind == "bracket":
        return LiePoly.bracket(_to_liepoly(node.children[0], field, arity), _to_liepoly(node.children[1], field, arity))
    raise PresentationSyntaxError("powers are not Lie expressions", node.token.line, node.token.column)


def _to_group_word(node: _Node) -> List[Tuple[int, int]]:
    if node.kind == "gen":
        return [(node.value, 1)]
    if node.kind == "num" and node.value == 1:
        return []
    if node.kind == "mul":
        return _to_group_word(node.children[0]) + _to_group_word(node.children[1])
    if node.kind == "pow":
        base = _to_group_word(node.children[0])
        if node.value < 0:
            base = [(g, -e) for g, e in reversed(base)]
        return base * abs(node.value)
    raise PresentationSyntaxError("group relators must be products of generators and their powers",
                                  node.token.line, node.token.column)


def _reduce_word(word: List[Tuple[int, int]]) -> GroupWord:
    """Merge adjacent powers of the same generator and cancel x x^-1."""
    out: List[List[int]] = []
    for g, e in word:
        if out and out[-1][0] == g:
            out[-1][1] += e
            if out[-1][1] == 0:
                out.pop()
        else:
            out.append([g, e])
    return tuple((g, e) for g, e in out)


def _parse(text: str):
    parser = _Parser(text)
    kind, field = parser.header()
    parser.generators()
    nodes = parser.relators()
    return kind, field, parser.names, nodes


def parse_group_presentation(text: str) -> GroupPresentation:
    """Parse "group F; gens a,b; rels a*b*a^-1*b^-1;"."""
    kind, field, names, nodes = _parse(text)
    if kind != "group":
        raise PresentationSyntaxError("expected a 'group' presentation", 1, 1)
    words = tuple(_reduce_word(_to_group_word(node)) for node in nodes)
    return GroupPresentation(field, tuple(names), words)


def parse_presentation(text: str) -> Presentation:
    """Parse the presentation DSL.

    `algebra`/`lie` headers give associative/Lie presentations; a `group`
    header gives the presentation of the group algebra F[G].
    """
    kind, field, names, nodes = _parse(text)
    arity = len(names)
    if kind == "group":
        words = tuple(_reduce_word(_to_group_word(node)) for node in nodes)
        return GroupPresentation(field, tuple(names), words).algebra()
    if kind == "lie":
        relators = tuple(_to_liepoly(node, field, arity) for node in nodes)
        flavor = Flavor.LIE
    else:
        relators = tuple(_to_ncpoly(node, field, arity) for node in nodes)
        flavor = Flavor.ASSOCIATIVE
    logger.debug(f"Parsed {kind} presentation over {field}: {arity} generators, {len(relators)} relators")
    return Presentation(field, tuple(names), relators, flavor)


def pretty_print(P: Presentation) -> str:
    """Normalized DSL text; parsing it gives back an equal presentation."""
    rels = ", ".join(r.format(P.generator_names) for r in P.relators)
    return (f"{P.flavor.value} {P.field};\n"
            f"gens {', '.join(P.generator_names)};\n"
            f"rels {rels};\n")


def pretty_print_group(G: GroupPresentation) -> str:
    rels = ", ".join(G.format_word(w) for w in G.relator_words)
    return (f"group {G.field};\n"
            f"gens {', '.join(G.generator_names)};\n"
            f"rels {rels};\n")
