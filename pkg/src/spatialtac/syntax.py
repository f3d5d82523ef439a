"""Tokenizer and expression parser shared by index notation and CIN text."""

from __future__ import annotations

import re
from typing import Mapping

from .expr import Access, Add, Expr, IndexVar, Literal, Mul, Sub, TensorVar
from .tensor import TensorFormat, dense_format


class NotationError(ValueError):
    """Syntax or arity error; ``pos`` is a 0-based character offset."""

    def __init__(self, message: str, pos: int | None = None):
        self.pos = pos
        super().__init__(f"at {pos}: {message}" if pos is not None else message)


_TOKEN = re.compile(r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\d*\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
                    r"|(?P<id>[A-Za-z_]\w*)|(?P<op>\+=|[=+\-*(),]))")


def _tokenize(text: str, pattern: re.Pattern = _TOKEN) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = pattern.match(text, pos)
        if not m:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise NotationError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class Parser:
    """Recursive-descent parser for accesses and expressions."""

    def __init__(self, text: str, tensors: Mapping[str, TensorVar | TensorFormat] | None,
                 pattern: re.Pattern = _TOKEN):
        self.toks = _tokenize(text, pattern)
        self.k = 0
        self.known = dict(tensors or {})
        self.seen: dict[str, TensorVar] = {}

    def peek(self):
        return self.toks[self.k]

    def take(self, value: str | None = None, kind: str | None = None):
        tok = self.peek()
        if (value is not None and tok[1] != value) or (kind is not None and tok[0] != kind):
            want = value if value is not None else kind
            got = tok[1] or "end of input"
            raise NotationError(f"expected {want!r}, got {got!r}", tok[2])
        self.k += 1
        return tok

    def tensor(self, name: str, arity: int, pos: int) -> TensorVar:
        if name in self.seen:
            tv = self.seen[name]
        elif name in self.known:
            spec = self.known[name]
            tv = spec if isinstance(spec, TensorVar) else TensorVar(name, spec)
        else:
            tv = TensorVar(name, dense_format(arity))
        if tv.order != arity:
            raise NotationError(
                f"tensor {name} has order {tv.order} but is used with {arity} indices", pos)
        self.seen[name] = tv
        return tv

    def access(self) -> Access:
        _, name, pos = self.take(kind="id")
        idx: list[IndexVar] = []
        if self.peek()[1] == "(":
            self.take("(")
            if self.peek()[1] != ")":
                idx.append(IndexVar(self.take(kind="id")[1]))
                while self.peek()[1] == ",":
                    self.take(",")
                    idx.append(IndexVar(self.take(kind="id")[1]))
            self.take(")")
        return Access(self.tensor(name, len(idx), pos), tuple(idx))

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek()[1] == "*":
            self.take("*")
            node = Mul(node, self.factor())
        return node

    def factor(self) -> Expr:
        kind, value, pos = self.peek()
        if kind == "num":
            self.k += 1
            return _number(value)
        if value == "-" and self.toks[self.k + 1][0] == "num":
            self.k += 1
            return _number("-" + self.take(kind="num")[1])
        if kind == "id":
            return self.access()
        if value == "(":
            self.take("(")
            node = self.expr()
            self.take(")")
            return node
        raise NotationError(f"unexpected {value or 'end of input'!r}", pos)


def _number(text: str) -> Literal:
    try:
        return Literal(int(text))
    except ValueError:
        return Literal(float(text))
