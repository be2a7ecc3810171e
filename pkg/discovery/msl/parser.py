"""
Tokenizer and recursive-descent parser for MSL.

Grammar (see docs/msl.md)::

    program    = header { binding } model
    header     = "params" INTEGER ";"
    binding    = NAME "=" expr ";"
    model      = "model" "=" expr ";"
    expr       = additive [ COMPARE additive ]
    additive   = term { ("+" | "-") term }
    term       = unary { ("*" | "/") unary }
    unary      = "-" unary | primary
    primary    = NUMBER | "p" "[" INTEGER "]" | "A" | "B" | NAME
               | BUILTIN "(" expr { "," expr } ")"
               | "[" expr { "," expr } "]" | "(" expr ")"
"""
import math
import re
from dataclasses import dataclass

from discovery import exceptions
from discovery.msl.nodes import (
    BUILTINS,
    COMPARISONS,
    INPUTS,
    MAX_DEPTH,
    MAX_SOURCE_LENGTH,
    RESERVED,
    Binary,
    Binding,
    Call,
    Input,
    ModelProgram,
    Name,
    Number,
    Param,
    Unary,
    Vector,
)

TOKEN_SPEC = [
    ("NUMBER", r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"),
    ("NAME", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("OP", r"<=|>=|==|!=|[-+*/<>=;,()\[\]]"),
    ("COMMENT", r"#[^\n]*"),
    ("NEWLINE", r"\n"),
    ("SKIP", r"[ \t\r]+"),
    ("MISMATCH", r"."),
]
TOKEN_RE = re.compile("|".join(f"(?P<{name}>{regex})" for name, regex in TOKEN_SPEC))
INTEGER_RE = re.compile(r"^\d+$")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int

    def __str__(self) -> str:
        return "end of input" if self.kind == "EOF" else f"`{self.text}`"


def tokenize(source: str) -> list:
    tokens = []
    line, line_start = 1, 0
    for match in TOKEN_RE.finditer(source):
        kind = match.lastgroup
        text = match.group()
        column = match.start() - line_start + 1
        if kind == "NEWLINE":
            line += 1
            line_start = match.end()
        elif kind == "MISMATCH":
            raise exceptions.ParseError(
                f"unexpected character {text!r}", line=line, column=column
            )
        elif kind not in ("SKIP", "COMMENT"):
            tokens.append(Token(kind, text, line, column))
    tokens.append(Token("EOF", "", line, len(source) - line_start + 1))
    return tokens


class Parser:
    def __init__(self, source: str):
        if len(source) > MAX_SOURCE_LENGTH:
            raise exceptions.ParseError(
                f"program is {len(source)} characters long; "
                f"the limit is {MAX_SOURCE_LENGTH}"
            )
        self._source = source
        self._tokens = tokenize(source)
        self._pos = 0
        self._nesting = 0
        self._num_parameters = 0
        self._names = {}

    def parse(self) -> ModelProgram:
        self._num_parameters = self._header()
        bindings = []
        while not self._at("NAME", "model"):
            bindings.append(self._binding())
        self._expect_text("model")
        self._expect_text("=")
        body = self._expression()
        self._expect_text(";")
        if self._current.kind != "EOF":
            self._error(f"unexpected {self._current} after the model line", {"end of input"})
        return ModelProgram(
            num_parameters=self._num_parameters,
            bindings=tuple(bindings),
            body=body,
            source=self._source,
        )

    # Helpers

    @property
    def _current(self) -> Token:
        return self._tokens[self._pos]

    def _advance(self) -> Token:
        token = self._current
        if token.kind != "EOF":
            self._pos += 1
        return token

    def _at(self, kind: str, text: str = None) -> bool:
        token = self._current
        return token.kind == kind and (text is None or token.text == text)

    def _at_op(self, *ops) -> bool:
        return self._current.kind == "OP" and self._current.text in ops

    def _error(self, message: str, expected=()):
        token = self._current
        raise exceptions.ParseError(
            message, line=token.line, column=token.column, expected=expected
        )

    def _expect_text(self, text: str) -> Token:
        if self._current.text != text or self._current.kind == "EOF":
            self._error(f"unexpected {self._current}", {text})
        return self._advance()

    def _integer(self, what: str) -> int:
        token = self._current
        if token.kind != "NUMBER" or not INTEGER_RE.match(token.text):
            self._error(f"{what} must be a non-negative integer, got {token}", {"INTEGER"})
        self._advance()
        return int(token.text)

    def _position(self, token: Token) -> tuple:
        return (token.line, token.column)

    def _checked(self, node):
        if node.depth > MAX_DEPTH:
            raise exceptions.ParseError(
                f"expression nesting exceeds the maximum depth of {MAX_DEPTH}",
                line=node.pos[0],
                column=node.pos[1],
            )
        return node

    # Grammar

    def _header(self) -> int:
        if not self._at("NAME", "params"):
            raise exceptions.HeaderError(
                "missing header: a program must start with `params <k>;`"
            )
        self._advance()
        if self._at_op("-"):
            raise exceptions.HeaderError(
                "the declared parameter count must not be negative"
            )
        token = self._current
        if token.kind != "NUMBER" or not INTEGER_RE.match(token.text):
            raise exceptions.HeaderError(
                f"line {token.line}, column {token.column}: "
                f"the parameter count must be an integer, got {token}"
            )
        self._advance()
        self._expect_text(";")
        return int(token.text)

    def _binding(self) -> Binding:
        token = self._current
        if token.kind != "NAME":
            self._error(f"unexpected {token}", {"NAME", "model"})
        if token.text in RESERVED:
            self._error(f"`{token.text}` is reserved and cannot be bound")
        if token.text in self._names:
            self._error(f"`{token.text}` is already bound")
        self._advance()
        self._expect_text("=")
        expr = self._expression()
        self._expect_text(";")
        self._names[token.text] = expr
        return Binding(token.text, expr)

    def _expression(self):
        self._nesting += 1
        if self._nesting > MAX_DEPTH:
            self._error(f"expression nesting exceeds the maximum depth of {MAX_DEPTH}")
        try:
            return self._comparison()
        finally:
            self._nesting -= 1

    def _comparison(self):
        left = self._additive()
        if self._at_op(*COMPARISONS):
            token = self._advance()
            right = self._additive()
            left = self._checked(
                Binary(token.text, left, right, pos=self._position(token))
            )
            if self._at_op(*COMPARISONS):
                self._error("comparison operators do not chain; add parentheses")
        return left

    def _additive(self):
        left = self._term()
        while self._at_op("+", "-"):
            token = self._advance()
            left = self._checked(
                Binary(token.text, left, self._term(), pos=self._position(token))
            )
        return left

    def _term(self):
        left = self._unary()
        while self._at_op("*", "/"):
            token = self._advance()
            left = self._checked(
                Binary(token.text, left, self._unary(), pos=self._position(token))
            )
        return left

    def _unary(self):
        if not self._at_op("-"):
            return self._primary()
        token = self._advance()
        # a parenthesised operand is one level, counted by _expression
        if self._at_op("("):
            operand = self._unary()
        else:
            self._nesting += 1
            if self._nesting > MAX_DEPTH:
                self._error(
                    f"expression nesting exceeds the maximum depth of {MAX_DEPTH}"
                )
            try:
                operand = self._unary()
            finally:
                self._nesting -= 1
        return self._checked(Unary("-", operand, pos=self._position(token)))

    def _arguments(self, closing: str) -> tuple:
        items = [self._expression()]
        while self._at_op(","):
            self._advance()
            items.append(self._expression())
        self._expect_text(closing)
        return tuple(items)

    def _primary(self):
        token = self._current
        pos = self._position(token)
        if token.kind == "NUMBER":
            value = float(token.text)
            if not math.isfinite(value):
                self._error(f"numeric literal `{token.text}` is out of range")
            self._advance()
            return Number(value, pos=pos)
        if self._at_op("("):
            self._advance()
            expr = self._expression()
            self._expect_text(")")
            return expr
        if self._at_op("["):
            self._advance()
            return self._checked(Vector(self._arguments("]"), pos=pos))
        if token.kind == "NAME":
            return self._named(token, pos)
        self._error(
            f"unexpected {token}",
            {"NUMBER", "NAME", "p", "A", "B", "(", "[", "-"},
        )

    def _named(self, token: Token, pos: tuple):
        name = token.text
        self._advance()
        if name == "p":
            self._expect_text("[")
            index = self._integer("a parameter index")
            self._expect_text("]")
            if index >= self._num_parameters:
                raise exceptions.HeaderError(
                    f"line {token.line}, column {token.column}: p[{index}] "
                    f"is out of range for `params {self._num_parameters};`"
                )
            return Param(index, pos=pos)
        if name in INPUTS:
            return Input(name, pos=pos)
        if name in BUILTINS:
            self._expect_text("(")
            args = self._arguments(")")
            if len(args) not in BUILTINS[name]:
                counts = " or ".join(str(count) for count in BUILTINS[name])
                raise exceptions.ParseError(
                    f"{name}() takes {counts} argument(s), got {len(args)}",
                    line=token.line,
                    column=token.column,
                )
            return self._checked(Call(name, args, pos=pos))
        if name in self._names:
            return Name(name, pos=pos)
        raise exceptions.ParseError(
            f"undefined name `{name}`",
            line=token.line,
            column=token.column,
            expected=set(self._names) | set(BUILTINS) | {"p", "A", "B"},
        )


def parse(source: str) -> ModelProgram:
    return Parser(source).parse()
