"""A tiny total expression language over 64-bit integers and booleans.

Guards, computation steps and data-transfer assignments are all built from
these expressions.  Evaluation is pure and deterministic; arithmetic that
leaves the signed 64-bit range raises Overflow instead of wrapping, so two
runs can never diverge silently.

Grammar (used by the model and monitor formats)::

    or    := and ('or' and)*
    and   := cmp ('and' cmp)*
    cmp   := add (('<'|'<='|'=='|'!='|'>='|'>') add)?     # no chaining
    add   := mul (('+'|'-') mul)*
    mul   := unary ('*' unary)*
    unary := ('not'|'-')* primary
    primary := INT | 'true' | 'false' | 'abs' '(' or ')' | IDENT('.'IDENT)? | '(' or ')'
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Sequence, Union

from .errors import ModelSyntaxError, Overflow, TypeMismatch, UnboundVariable

Value = Union[int, bool]

INT_MIN = -(2**63)
INT_MAX = 2**63 - 1

_CMP_OPS = {"<", "<=", "==", "!=", ">=", ">"}
_ARITH_OPS = {"+", "-", "*"}
_BOOL_OPS = {"and", "or"}


def is_bool(v: Value) -> bool:
    return type(v) is bool


def is_int(v: Value) -> bool:
    return type(v) is int


def _checked(n: int) -> int:
    if n < INT_MIN or n > INT_MAX:
        raise Overflow(f"integer result {n} outside 64-bit range")
    return n


# --- expression tree ---------------------------------------------------------

@dataclass(frozen=True)
class Lit:
    value: Value


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class LocName:
    """A control-location literal, resolved to its per-component index.

    Only produced by binding a bare identifier against a component's location
    set (e.g. in ``Worker1.loc == done``); evaluates as an integer but renders
    back as the location name.
    """

    name: str
    index: int


@dataclass(frozen=True)
class Unary:
    op: str  # 'not' | 'neg' | 'abs'
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Lit, Var, LocName, Unary, Binary]


@dataclass(frozen=True)
class Assignment:
    target: str
    source: Expr


# --- evaluation ---------------------------------------------------------------

def eval_expr(e: Expr, v: Mapping[str, Value]) -> Value:
    """Evaluate ``e`` under valuation ``v``.

    Raises UnboundVariable, TypeMismatch or Overflow; never returns None.
    """
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, LocName):
        return e.index
    if isinstance(e, Var):
        try:
            return v[e.name]
        except KeyError:
            raise UnboundVariable(e.name) from None
    if isinstance(e, Unary):
        x = eval_expr(e.operand, v)
        if e.op == "not":
            if not is_bool(x):
                raise TypeMismatch("'not' needs a boolean operand")
            return not x
        if not is_int(x):
            raise TypeMismatch(f"'{e.op}' needs an integer operand")
        if e.op == "neg":
            return _checked(-x)
        if e.op == "abs":
            return _checked(abs(x))
        raise TypeMismatch(f"unknown unary operator {e.op!r}")
    if isinstance(e, Binary):
        if e.op in _BOOL_OPS:
            l = eval_expr(e.left, v)
            if not is_bool(l):
                raise TypeMismatch(f"'{e.op}' needs boolean operands")
            # short-circuit; the right side is still type-checked statically
            if e.op == "and" and not l:
                return False
            if e.op == "or" and l:
                return True
            r = eval_expr(e.right, v)
            if not is_bool(r):
                raise TypeMismatch(f"'{e.op}' needs boolean operands")
            return r
        l = eval_expr(e.left, v)
        r = eval_expr(e.right, v)
        if not (is_int(l) and is_int(r)):
            raise TypeMismatch(f"'{e.op}' needs integer operands")
        if e.op == "+":
            return _checked(l + r)
        if e.op == "-":
            return _checked(l - r)
        if e.op == "*":
            return _checked(l * r)
        if e.op == "<":
            return l < r
        if e.op == "<=":
            return l <= r
        if e.op == "==":
            return l == r
        if e.op == "!=":
            return l != r
        if e.op == ">=":
            return l >= r
        if e.op == ">":
            return l > r
        raise TypeMismatch(f"unknown operator {e.op!r}")
    raise TypeMismatch(f"not an expression: {e!r}")


def type_check(e: Expr, env: Mapping[str, str]) -> str:
    """Static type of ``e`` ('int' or 'bool') given variable types in ``env``."""
    if isinstance(e, Lit):
        return "bool" if is_bool(e.value) else "int"
    if isinstance(e, LocName):
        return "int"
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnboundVariable(e.name) from None
    if isinstance(e, Unary):
        t = type_check(e.operand, env)
        if e.op == "not":
            if t != "bool":
                raise TypeMismatch("'not' needs a boolean operand")
            return "bool"
        if t != "int":
            raise TypeMismatch(f"'{e.op}' needs an integer operand")
        return "int"
    if isinstance(e, Binary):
        lt = type_check(e.left, env)
        rt = type_check(e.right, env)
        if e.op in _BOOL_OPS:
            if lt != "bool" or rt != "bool":
                raise TypeMismatch(f"'{e.op}' needs boolean operands")
            return "bool"
        if lt != "int" or rt != "int":
            raise TypeMismatch(f"'{e.op}' needs integer operands")
        return "bool" if e.op in _CMP_OPS else "int"
    raise TypeMismatch(f"not an expression: {e!r}")


def free_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Unary):
        return free_vars(e.operand)
    if isinstance(e, Binary):
        return free_vars(e.left) | free_vars(e.right)
    return set()


# --- valuations ----------------------------------------------------------------

def override(v: Mapping[str, Value], w: Mapping[str, Value]) -> dict[str, Value]:
    """Right-biased union: w's bindings win wherever both are defined."""
    out = dict(v)
    out.update(w)
    return out


def apply_assignments(
    assignments: Sequence[Assignment], v: Mapping[str, Value]
) -> dict[str, Value]:
    """Apply a computation step left to right; each assignment sees the
    effects of the ones before it."""
    out = dict(v)
    for a in assignments:
        out[a.target] = eval_expr(a.source, out)
    return out


# --- compilation (internal fast path) -------------------------------------------

def compile_expr(e: Expr, slot: Mapping[str, int]) -> Callable[[tuple], Value]:
    """Compile ``e`` into a closure over a tuple-encoded valuation.

    ``slot`` maps variable names to tuple positions.  Used by the engines and
    the state-space explorer; agrees with eval_expr by construction (checked
    by property tests).
    """
    if isinstance(e, Lit):
        c = e.value
        return lambda t: c
    if isinstance(e, LocName):
        i = e.index
        return lambda t: i
    if isinstance(e, Var):
        k = slot[e.name]
        return lambda t: t[k]
    if isinstance(e, Unary):
        f = compile_expr(e.operand, slot)
        if e.op == "not":
            return lambda t: not f(t)
        if e.op == "neg":
            return lambda t: _checked(-f(t))
        if e.op == "abs":
            return lambda t: _checked(abs(f(t)))
        raise TypeMismatch(f"unknown unary operator {e.op!r}")
    if isinstance(e, Binary):
        fl = compile_expr(e.left, slot)
        fr = compile_expr(e.right, slot)
        op = e.op
        if op == "and":
            return lambda t: fl(t) and fr(t)
        if op == "or":
            return lambda t: fl(t) or fr(t)
        if op == "+":
            return lambda t: _checked(fl(t) + fr(t))
        if op == "-":
            return lambda t: _checked(fl(t) - fr(t))
        if op == "*":
            return lambda t: _checked(fl(t) * fr(t))
        if op == "<":
            return lambda t: fl(t) < fr(t)
        if op == "<=":
            return lambda t: fl(t) <= fr(t)
        if op == "==":
            return lambda t: fl(t) == fr(t)
        if op == "!=":
            return lambda t: fl(t) != fr(t)
        if op == ">=":
            return lambda t: fl(t) >= fr(t)
        if op == ">":
            return lambda t: fl(t) > fr(t)
    raise TypeMismatch(f"not an expression: {e!r}")


# --- parsing ---------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str  # 'ident' | 'int' | 'op' | 'punct' | 'end'
    text: str
    line: int
    column: int


_PUNCT = ("<=", ">=", "==", "!=", ":=", "->", "<", ">", "+", "-", "*", "/", "(",
          ")", "{", "}", ",", ";", ":", ".", "=", "@", "[", "]")

_KEYWORD_OPS = {"and", "or", "not", "abs", "true", "false"}


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(Token("int", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_" or c in "⊥β":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_⊥β@"):
                j += 1
            toks.append(Token("ident", text[i:j], line, col))
            col += j - i
            i = j
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                toks.append(Token("punct", p, line, col))
                i += len(p)
                col += len(p)
                break
        else:
            raise ModelSyntaxError(f"unexpected character {c!r}", line, col)
    toks.append(Token("end", "", line, col))
    return toks


class TokenCursor:
    """Shared cursor for the expression, model and monitor parsers."""

    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "end":
            self.pos += 1
        return t

    def accept(self, text: str) -> bool:
        if self.current.text == text and self.current.kind != "end":
            self.advance()
            return True
        return False

    def expect(self, text: str) -> Token:
        t = self.current
        if t.text != text or t.kind == "end":
            raise ModelSyntaxError(f"expected {text!r}, found {t.text!r}", t.line, t.column)
        return self.advance()

    def expect_kind(self, kind: str) -> Token:
        t = self.current
        if t.kind != kind:
            raise ModelSyntaxError(f"expected {kind}, found {t.text!r}", t.line, t.column)
        return self.advance()

    def error(self, message: str):
        t = self.current
        raise ModelSyntaxError(message, t.line, t.column)


def parse_expression(cur: TokenCursor) -> Expr:
    return _parse_or(cur)


def _parse_or(cur: TokenCursor) -> Expr:
    e = _parse_and(cur)
    while cur.current.text == "or" and cur.current.kind == "ident":
        cur.advance()
        e = Binary("or", e, _parse_and(cur))
    return e


def _parse_and(cur: TokenCursor) -> Expr:
    e = _parse_cmp(cur)
    while cur.current.text == "and" and cur.current.kind == "ident":
        cur.advance()
        e = Binary("and", e, _parse_cmp(cur))
    return e


def _parse_cmp(cur: TokenCursor) -> Expr:
    e = _parse_add(cur)
    if cur.current.text in _CMP_OPS and cur.current.kind == "punct":
        op = cur.advance().text
        rhs = _parse_add(cur)
        if cur.current.text in _CMP_OPS and cur.current.kind == "punct":
            cur.error("comparisons do not chain; parenthesize")
        return Binary(op, e, rhs)
    return e


def _parse_add(cur: TokenCursor) -> Expr:
    e = _parse_mul(cur)
    while cur.current.text in ("+", "-") and cur.current.kind == "punct":
        op = cur.advance().text
        e = Binary(op, e, _parse_mul(cur))
    return e


def _parse_mul(cur: TokenCursor) -> Expr:
    e = _parse_unary(cur)
    while cur.current.text == "*" and cur.current.kind == "punct":
        cur.advance()
        e = Binary("*", e, _parse_unary(cur))
    return e


def _parse_unary(cur: TokenCursor) -> Expr:
    if cur.current.text == "not" and cur.current.kind == "ident":
        cur.advance()
        return Unary("not", _parse_unary(cur))
    if cur.current.text == "-" and cur.current.kind == "punct":
        cur.advance()
        inner = _parse_unary(cur)
        if isinstance(inner, Lit) and is_int(inner.value):
            return Lit(_checked(-inner.value))
        return Unary("neg", inner)
    return _parse_primary(cur)


def _parse_primary(cur: TokenCursor) -> Expr:
    t = cur.current
    if t.kind == "int":
        cur.advance()
        return Lit(_checked(int(t.text)))
    if t.text == "(":
        cur.advance()
        e = _parse_or(cur)
        cur.expect(")")
        return e
    if t.kind == "ident":
        if t.text == "true":
            cur.advance()
            return Lit(True)
        if t.text == "false":
            cur.advance()
            return Lit(False)
        if t.text == "abs":
            cur.advance()
            cur.expect("(")
            e = _parse_or(cur)
            cur.expect(")")
            return Unary("abs", e)
        cur.advance()
        name = t.text
        if cur.accept("."):
            name = name + "." + cur.expect_kind("ident").text
        return Var(name)
    cur.error(f"expected an expression, found {t.text!r}")
    raise AssertionError  # unreachable


def parse_expr(text: str) -> Expr:
    """Parse a standalone expression string."""
    cur = TokenCursor(tokenize(text))
    e = parse_expression(cur)
    if cur.current.kind != "end":
        cur.error(f"trailing input after expression: {cur.current.text!r}")
    return e


# --- rendering -----------------------------------------------------------------

_PREC = {
    "or": 1,
    "and": 2,
    "<": 3, "<=": 3, "==": 3, "!=": 3, ">=": 3, ">": 3,
    "+": 4, "-": 4,
    "*": 5,
}


def render_expr(e: Expr) -> str:
    return _render(e, 0)


def _render(e: Expr, parent_prec: int) -> str:
    if isinstance(e, Lit):
        if is_bool(e.value):
            return "true" if e.value else "false"
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, LocName):
        return e.name
    if isinstance(e, Unary):
        if e.op == "abs":
            return f"abs({_render(e.operand, 0)})"
        if e.op == "not":
            return f"not {_render(e.operand, 6)}"
        return f"-{_render(e.operand, 6)}"
    if isinstance(e, Binary):
        p = _PREC[e.op]
        # comparisons do not chain, so force parens on nested same-level cmp
        left = _render(e.left, p)
        right = _render(e.right, p + 1)
        s = f"{left} {e.op} {right}"
        return f"({s})" if p < parent_prec else s
    raise TypeMismatch(f"not an expression: {e!r}")


def render_assignment(a: Assignment) -> str:
    return f"{a.target} := {render_expr(a.source)}"
