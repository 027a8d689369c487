"""Recursive-descent parser for the tensor expression grammar.

Grammar::

    expr    := ['-'] term (('+' | '-') term)*
    term    := factor (['*'] factor)*          # juxtaposition multiplies
    factor  := NUMBER ['/' NUMBER]
             | '(' expr ')'
             | 'd' '[' index ']' '(' expr ')'
             | NAME '??' | NAME '?'
             | NAME ['[' index (',' index)* ']']
    index   := ('^' | '_') (NAME | NUMBER) ['?']
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .expr import (
    ZERO, Atom, Expr, HeadRegistry, Index, Num, Partial, Product, Sum, Var,
)

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<name>[A-Za-z][A-Za-z0-9]*'*)|(?P<op>\?\?|[?\[\](),^_*+\-/]))"
)


class ParseError(ValueError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.message = message
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


@dataclass
class _Tok:
    kind: str
    value: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos:].lstrip()[0]!r}", pos, text)
        kind = m.lastgroup
        tokens.append(_Tok(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(_Tok("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, registry: HeadRegistry, allow_patterns: bool):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.registry = registry
        self.allow_patterns = allow_patterns

    # token helpers
    @property
    def tok(self) -> _Tok:
        return self.tokens[self.i]

    def error(self, message: str, tok: _Tok | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.pos, self.text)

    def at(self, value: str) -> bool:
        return self.tok.kind == "op" and self.tok.value == value

    def expect(self, value: str) -> _Tok:
        if not self.at(value):
            found = self.tok.value or "end of input"
            raise self.error(f"expected {value!r}, found {found!r}")
        tok = self.tok
        self.i += 1
        return tok

    # grammar
    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.value!r}")
        return e

    def expr(self) -> Expr:
        terms = []
        sign = 1
        if self.at("-"):
            self.i += 1
            sign = -1
        elif self.at("+"):
            self.i += 1
        terms.append(self._signed(sign, self.term()))
        while self.at("+") or self.at("-"):
            sign = 1 if self.tok.value == "+" else -1
            self.i += 1
            terms.append(self._signed(sign, self.term()))
        if len(terms) == 1:
            return terms[0]
        return Sum(tuple(terms))

    @staticmethod
    def _signed(sign: int, e: Expr) -> Expr:
        if sign == 1:
            return e
        if isinstance(e, Num):
            return Num(-e.value)
        if isinstance(e, Product):
            return Product(-e.coefficient, e.factors)
        return Product(Fraction(-1), (e,))

    def _starts_factor(self) -> bool:
        t = self.tok
        return t.kind in ("num", "name") or (t.kind == "op" and t.value == "(")

    def term(self) -> Expr:
        coefficient = Fraction(1)
        factors: list[Expr] = []
        first = True
        while first or self.at("*") or self._starts_factor():
            if not first and self.at("*"):
                self.i += 1
            first = False
            f = self.factor()
            if isinstance(f, Num):
                coefficient *= f.value
            elif isinstance(f, Product):
                coefficient *= f.coefficient
                factors.extend(f.factors)
            else:
                factors.append(f)
        if not factors:
            return ZERO if coefficient == 0 else Num(coefficient)
        if coefficient == 1 and len(factors) == 1:
            return factors[0]
        return Product(coefficient, tuple(factors))

    def factor(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            value = Fraction(int(t.value))
            if self.at("/"):
                self.i += 1
                if self.tok.kind != "num":
                    raise self.error("expected integer denominator")
                den = int(self.tok.value)
                if den == 0:
                    raise self.error("zero denominator")
                value /= den
                self.i += 1
            return ZERO if value == 0 else Num(value)
        if self.at("("):
            self.i += 1
            inner = self.expr()
            self.expect(")")
            return inner
        if t.kind == "name":
            return self.named()
        raise self.error(f"unexpected {t.value or 'end of input'!r}")

    def named(self) -> Expr:
        t = self.tok
        self.i += 1
        name = t.value
        if self.at("??") or self.at("?"):
            if not self.allow_patterns:
                raise self.error("pattern variable in ground expression", t)
            seq = self.tok.value == "??"
            self.i += 1
            return Var(name, seq)
        if name == "d" and self.at("[") and self._is_derivative():
            self.expect("[")
            index = self.index()
            self.expect("]")
            self.expect("(")
            operand = self.expr()
            self.expect(")")
            return Partial(index, operand)
        indices: list[Index] = []
        if self.at("["):
            self.i += 1
            indices.append(self.index())
            while self.at(","):
                self.i += 1
                indices.append(self.index())
            self.expect("]")
        head = self.registry.get(name)
        if head is None:
            head = self.registry.lookup(name, len(indices))
        elif head.arity != len(indices):
            raise self.error(
                f"arity mismatch: {name} takes {head.arity} indices, got {len(indices)}", t
            )
        return Atom(head, tuple(indices))

    def _is_derivative(self) -> bool:
        # d[idx]( ... ) -- a single index followed by an opening parenthesis
        j = self.i
        depth = 0
        while j < len(self.tokens):
            tok = self.tokens[j]
            if tok.kind == "op" and tok.value == "[":
                depth += 1
            elif tok.kind == "op" and tok.value == "]":
                depth -= 1
                if depth == 0:
                    nxt = self.tokens[j + 1]
                    return nxt.kind == "op" and nxt.value == "("
            elif tok.kind == "end":
                return False
            j += 1
        return False

    def index(self) -> Index:
        if not (self.at("^") or self.at("_")):
            raise self.error("expected '^' or '_' before index name")
        upper = self.tok.value == "^"
        self.i += 1
        t = self.tok
        if t.kind not in ("name", "num"):
            raise self.error("expected index name")
        self.i += 1
        pattern = False
        if self.at("?"):
            if not self.allow_patterns:
                raise self.error("pattern index in ground expression")
            pattern = True
            self.i += 1
        return Index(t.value, upper, pattern)


def parse_expr(
    text: str,
    registry: HeadRegistry | None = None,
    *,
    allow_patterns: bool = False,
    check: bool = True,
) -> Expr:
    """Parse ``text`` into an (un-canonicalized) expression.

    Raises :class:`ParseError` on syntax errors, arity mismatches and
    malformed index structure (a repeated index with equal variance, an index
    used three times, or sum terms with different free indices).
    """
    registry = registry if registry is not None else HeadRegistry()
    e = _Parser(text, registry, allow_patterns).parse()
    if check:
        from .canonical import IndexStructureError, free_indices

        try:
            free_indices(e)
        except IndexStructureError as err:
            raise ParseError(str(err), 0, text) from None
    return e


def parse_pattern(text: str, registry: HeadRegistry | None = None) -> Expr:
    return parse_expr(text, registry, allow_patterns=True)


__all__ = ["ParseError", "parse_expr", "parse_pattern"]
