"""Machine language front end: lexer, recursive-descent parser, pretty printer.

The surface syntax is ASCII; common mathematical symbols are accepted as
aliases (see ``UNICODE_ALIASES``).  Parsing yields unresolved identifier
nodes which :mod:`unitb.typecheck` resolves and sort-checks.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional

from .kernel import (
    BOOL, FALSE, INT_LITERAL, TRUE, Assignment, Derivation, Event, Expr,
    Machine, Property, Sort, Step, Type, VarDecl, Witness, normalize,
)


@dataclass(frozen=True)
class SourceSpan:
    file: Optional[str]
    line: int
    col: int
    end_line: int
    end_col: int

    def __str__(self) -> str:
        f = self.file or "<input>"
        return f"{f}:{self.line}:{self.col}"


@dataclass(frozen=True)
class Diagnostic:
    span: Optional[SourceSpan]
    kind: str  # lexical, syntax, scope, sort, structure
    message: str
    where: str = ""  # enclosing declaration, e.g. "event enter"

    @property
    def location(self) -> str:
        if self.span is not None:
            return str(self.span)
        return self.where or "<machine>"

    def __str__(self) -> str:
        loc = self.location
        return f"{loc}: {self.kind} error: {self.message}"


class ParseError(Exception):
    def __init__(self, diagnostics: List[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


# ---------------------------------------------------------------------------
# Lexer

KEYWORDS = {
    "machine", "refines", "sets", "vars", "init", "invariant", "event",
    "during", "upon", "when", "then", "end", "property", "derivation", "by",
    "depends", "witness", "int", "mod", "in", "notin", "subset", "union",
    "inter", "dom", "ran", "inv", "img", "domsub", "ransub", "ovl", "un",
    "tr", "wd", "forall", "exists", "true", "false", "not", "and", "or",
    "set", "bool",
}

UNICODE_ALIASES = {
    "∈": "in", "∉": "notin", "⊆": "subset", "∪": "union", "∩": "inter",
    "∖": "\\", "⩤": "domsub", "⩥": "ransub", "⊕": "ovl", "∧": "and",
    "∨": "or", "¬": "not", "⇒": "=>", "⇔": "<=>", "≠": "/=", "≤": "<=",
    "≥": ">=", "↝": "~>", "∀": "forall", "∃": "exists", "↦": "|->",
    "⇸": "+->", "→": "-->", "≔": ":=", "·": ".", "⁻¹": "^-1",
}

# longest first
SYMBOLS = [
    "<<|", "|>>", "|->", "+->", "-->", "<=>", "^-1", ":=", "::", ":|", "~>",
    "=>", "<=", ">=", "/=", "/\\", "\\/", "..", "<+", "->", "=", "<", ">",
    "+", "-", "\\", "(", ")", "{", "}", "[", "]", ",", ";", ":", "|", ".",
    "&",
]

SYMBOL_ALIASES = {
    "<<|": "domsub", "|>>": "ransub", "<+": "ovl", "/\\": "and", "\\/": "or",
    "&": "and",
}


@dataclass(frozen=True)
class Token:
    kind: str  # ID, PID (primed identifier), NUM, KW, SYM, EOF
    text: str
    span: SourceSpan
    space_before: bool


def _is_ident_start(c: str) -> bool:
    return c.isalpha() or c == "_"


def _is_ident_char(c: str) -> bool:
    return c.isalnum() or c == "_"


def tokenize(text: str, file: Optional[str] = None) -> List[Token]:
    toks: List[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    space = True

    def span(l0, c0, l1, c1):
        return SourceSpan(file, l0, c0, l1, c1)

    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            space = True
            continue
        if c.isspace():
            i += 1
            col += 1
            space = True
            continue
        if text.startswith("--", i) and not text.startswith("-->", i):
            while i < n and text[i] != "\n":
                i += 1
            space = True
            continue
        start_col = col
        if c == "⟨":
            toks.append(Token("KW", "wd", span(line, col, line, col + 1), space))
            toks.append(Token("SYM", "(", span(line, col, line, col + 1), False))
            i += 1
            col += 1
            space = False
            continue
        if c == "⟩":
            toks.append(Token("SYM", ")", span(line, col, line, col + 1), space))
            i += 1
            col += 1
            space = False
            continue
        if c == "∅":
            toks.append(Token("SYM", "{", span(line, col, line, col + 1), space))
            toks.append(Token("SYM", "}", span(line, col, line, col + 1), False))
            i += 1
            col += 1
            space = False
            continue
        if c == ":" and text.startswith(":∈", i):
            toks.append(Token("SYM", "::", span(line, col, line, col + 2), space))
            i += 2
            col += 2
            space = False
            continue
        if _is_ident_start(c):
            j = i
            while j < n and _is_ident_char(text[j]):
                j += 1
            word = text[i:j]
            kind = "KW" if word in KEYWORDS else "ID"
            if j < n and text[j] == "'" and kind == "ID":
                toks.append(Token("PID", word, span(line, col, line, col + j - i + 1), space))
                j += 1
            else:
                toks.append(Token(kind, word, span(line, col, line, col + j - i), space))
            col += j - i
            i = j
            space = False
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            # a trailing quote is only meaningful in obligation tags ("as 1'")
            if j < n and text[j] == "'":
                j += 1
            toks.append(Token("NUM", text[i:j], span(line, col, line, col + j - i), space))
            col += j - i
            i = j
            space = False
            continue
        matched = None
        alias = False
        for s in SYMBOLS:
            if text.startswith(s, i):
                matched = s
                break
        length = len(matched) if matched else 1
        if matched is None:
            for u, a in UNICODE_ALIASES.items():
                if text.startswith(u, i):
                    matched, length, alias = a, len(u), True
                    break
        if matched is None:
            raise ParseError([Diagnostic(span(line, col, line, col + 1), "lexical",
                                         f"unexpected character {c!r}")])
        word = SYMBOL_ALIASES.get(matched, matched)
        kind = "KW" if word in KEYWORDS else "SYM"
        if word == ".":
            # a dot glued to both neighbours is function application (f.x);
            # otherwise it separates a quantifier's range from its term
            nxt = text[i + length] if i + length < n else " "
            prev_tight = not space and toks and toks[-1].kind in (
                "ID", "PID", "KW", "NUM") or (not space and toks and toks[-1].text in (")", "]", "}", "^-1"))
            if not alias and prev_tight and (_is_ident_start(nxt) or nxt == "("):
                word = "APPDOT"
        toks.append(Token(kind, word, span(line, start_col, line, start_col + length), space))
        i += length
        col += length
        space = False
    toks.append(Token("EOF", "", span(line, col, line, col), True))
    return toks


# ---------------------------------------------------------------------------
# Parser

REL_OPS = {"=", "/=", "in", "notin", "subset", "<", "<=", ">", ">="}
SET_OPS = {"union": "union", "inter": "inter", "\\": "diff", "domsub": "domsub",
           "ransub": "ransub", "ovl": "ovl"}
SECTION_WORDS = {"sets", "vars", "init", "invariant", "event", "property",
                 "derivation", "depends", "witness", "end"}
STEP_WORDS = {"implication", "split", "trans", "ensure", "induction", "psp",
              "transient", "cite", "reuse", "mc"}


def _flat(op: str, parts: list, span) -> Expr:
    # one node per chain; parenthesized sub-chains stay nested so printing
    # and re-parsing reproduce the same tree
    return Expr(op, tuple(parts), span=span)


class _Parser:
    def __init__(self, tokens: List[Token], file: Optional[str]):
        self.toks = tokens
        self.pos = 0
        self.file = file

    # token helpers
    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if self.pos < len(self.toks) - 1:
            self.pos += 1
        return t

    def at(self, text: str, k: int = 0) -> bool:
        t = self.peek(k)
        return t.kind in ("KW", "SYM") and t.text == text

    def accept(self, text: str) -> Optional[Token]:
        if self.at(text):
            return self.next()
        return None

    def error(self, msg: str, tok: Optional[Token] = None):
        tok = tok or self.peek()
        found = "end of input" if tok.kind == "EOF" else repr(tok.text)
        raise ParseError([Diagnostic(tok.span, "syntax", f"{msg}, found {found}")])

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}")
        return self.next()

    def ident(self, what: str = "identifier") -> Token:
        t = self.peek()
        if t.kind != "ID":
            self.error(f"expected {what}")
        return self.next()

    # expressions
    def expr(self) -> Expr:
        return self.iff()

    def iff(self) -> Expr:
        left = self.implies()
        while self.at("<=>"):
            t = self.next()
            right = self.implies()
            left = Expr("iff", (left, right), span=t.span)
        return left

    def implies(self) -> Expr:
        left = self.disj()
        if self.at("=>"):
            t = self.next()
            right = self.implies()
            return Expr("implies", (left, right), span=t.span)
        return left

    def disj(self) -> Expr:
        parts = [self.conj()]
        span = None
        while self.at("or"):
            span = self.next().span
            parts.append(self.conj())
        return parts[0] if len(parts) == 1 else _flat("or", parts, span)

    def conj(self) -> Expr:
        parts = [self.neg()]
        span = None
        while self.at("and"):
            span = self.next().span
            parts.append(self.neg())
        return parts[0] if len(parts) == 1 else _flat("and", parts, span)

    def neg(self) -> Expr:
        if self.at("not"):
            t = self.next()
            return Expr("not", (self.neg(),), span=t.span)
        return self.relation()

    def relation(self) -> Expr:
        left = self.interval()
        t = self.peek()
        if t.kind in ("KW", "SYM") and t.text in REL_OPS:
            self.next()
            right = self.interval()
            op = t.text
            if op == "=":
                return Expr("eq", (left, right), span=t.span)
            if op == "/=":
                return Expr("not", (Expr("eq", (left, right), span=t.span),), span=t.span)
            if op == "in":
                return Expr("member", (left, right), span=t.span)
            if op == "notin":
                return Expr("not", (Expr("member", (left, right), span=t.span),), span=t.span)
            if op == "subset":
                return Expr("subset", (left, right), span=t.span)
            if op == "<":
                return Expr("lt", (left, right), span=t.span)
            if op == "<=":
                return Expr("le", (left, right), span=t.span)
            if op == ">":
                return Expr("lt", (right, left), span=t.span)
            return Expr("le", (right, left), span=t.span)
        return left

    def interval(self) -> Expr:
        left = self.setop()
        if self.at(".."):
            t = self.next()
            right = self.setop()
            return Expr("interval", (left, right), span=t.span)
        return left

    def setop(self) -> Expr:
        left = self.additive()
        while True:
            t = self.peek()
            if t.kind in ("KW", "SYM") and t.text in SET_OPS:
                self.next()
                right = self.additive()
                left = Expr(SET_OPS[t.text], (left, right), span=t.span)
            else:
                return left

    def additive(self) -> Expr:
        left = self.postfix()
        while self.at("+") or self.at("-"):
            t = self.next()
            right = self.postfix()
            left = Expr("add" if t.text == "+" else "sub", (left, right), span=t.span)
        return left

    def postfix(self) -> Expr:
        e = self.atom()
        while True:
            t = self.peek()
            if t.text == "(" and t.kind == "SYM" and not t.space_before:
                self.next()
                arg = self.expr()
                self.expect(")")
                e = Expr("apply", (e, arg), span=t.span)
            elif t.text == "APPDOT":
                self.next()
                arg = self.atom()
                e = Expr("apply", (e, arg), span=t.span)
            elif t.text == "[" and not t.space_before:
                self.next()
                arg = self.expr()
                self.expect("]")
                e = Expr("img", (e, arg), span=t.span)
            elif t.text == "^-1":
                self.next()
                e = Expr("inv", (e,), span=t.span)
            else:
                return e

    def atom(self) -> Expr:
        t = self.peek()
        if t.kind == "NUM":
            if t.text.endswith("'"):
                self.error("expected an expression")
            self.next()
            return Expr("int", value=int(t.text), span=t.span)
        if t.kind == "SYM" and t.text == "-" and self.peek(1).kind == "NUM" and not self.peek(1).text.endswith("'"):
            self.next()
            n = self.next()
            return Expr("int", value=-int(n.text), span=t.span)
        if t.kind == "ID":
            self.next()
            return Expr("name", name=t.text, span=t.span)
        if t.kind == "PID":
            self.next()
            return Expr("name", name=t.text, primed=True, span=t.span)
        if t.kind == "KW":
            if t.text in ("true", "false"):
                self.next()
                return Expr("bool", value=(t.text == "true"), span=t.span)
            if t.text in ("dom", "ran", "inv"):
                self.next()
                if self.at("APPDOT"):
                    self.next()
                    arg = self.atom()
                else:
                    self.expect("(")
                    arg = self.expr()
                    self.expect(")")
                return Expr(t.text, (arg,), span=t.span)
            if t.text == "wd":
                self.next()
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Expr("wd", (arg,), span=t.span)
            if t.text == "img":
                self.next()
                self.expect("(")
                r = self.expr()
                self.expect(",")
                s = self.expr()
                self.expect(")")
                return Expr("img", (r, s), span=t.span)
            if t.text in ("forall", "exists"):
                return self.quantifier()
        if t.kind == "SYM":
            if t.text == "(":
                self.next()
                e = self.expr()
                self.expect(")")
                return e
            if t.text == "{":
                self.next()
                items = []
                if not self.at("}"):
                    items.append(self.set_item())
                    while self.accept(","):
                        items.append(self.set_item())
                self.expect("}")
                return Expr("setlit", tuple(items), span=t.span)
        self.error("expected an expression")

    def set_item(self) -> Expr:
        e = self.interval()
        if self.at("|->"):
            t = self.next()
            f = self.interval()
            return Expr("maplet", (e, f), span=t.span)
        return e

    def binders(self, closing: tuple) -> tuple:
        out = []
        while True:
            names = [self.ident("bound variable").text]
            while self.accept(","):
                names.append(self.ident("bound variable").text)
            self.expect(":")
            sort = self.ident("sort name").text
            out.extend((n, sort) for n in names)
            if self.at(",") and not any(self.at(c, 1) for c in closing):
                self.next()
                continue
            return tuple(out)

    def quantifier(self) -> Expr:
        t = self.next()
        self.expect("(")
        bs = self.binders(())
        rng = Expr("bool", value=True)
        if self.accept("|"):
            rng = self.expr()
        if not self.accept("APPDOT"):
            self.expect(".")
        term = self.expr()
        self.expect(")")
        return Expr(t.text, (rng, term), binders=bs, span=t.span)

    # machine structure
    def value_type(self) -> Type:
        if self.accept("bool"):
            return BOOL
        if self.accept("set"):
            self.expect("(")
            s = self.ident("sort name").text
            self.expect(")")
            return Type("set", s)
        s = self.ident("type").text
        if self.accept("+->"):
            return Type("pfun", s, self.ident("sort name").text)
        if self.accept("-->"):
            return Type("tfun", s, self.ident("sort name").text)
        return Type("elem", s)

    def integer(self) -> int:
        neg = bool(self.accept("-"))
        t = self.peek()
        if t.kind != "NUM" or t.text.endswith("'"):
            self.error("expected an integer")
        self.next()
        return -int(t.text) if neg else int(t.text)

    def machine(self) -> Machine:
        head = self.expect("machine")
        name = self.ident("machine name").text
        spans = {"machine": head.span}
        refines = None
        if self.accept("refines"):
            refines = self.ident("machine name").text
        sorts: list = []
        variables: list = []
        init = TRUE
        invariants: list = []
        events: list = []
        properties: list = []
        derivations: list = []
        deps: list = []
        witnesses: list = []
        while True:
            t = self.peek()
            if self.accept("end"):
                break
            if self.accept("sets"):
                self.sort_section(sorts, spans)
            elif self.accept("vars"):
                while True:
                    toks = [self.ident("variable name")]
                    while self.accept(","):
                        toks.append(self.ident("variable name"))
                    names = [t.text for t in toks]
                    spans.update((f"variable {t.text}", t.span) for t in toks)
                    self.expect(":")
                    ty = self.value_type()
                    variables.extend(VarDecl(n, ty) for n in names)
                    self.accept(";")
                    if not (self.peek().kind == "ID" and (self.at(":", 1) or self.at(",", 1))):
                        break
            elif self.accept("init"):
                spans["init"] = self.peek().span
                init = self.expr()
            elif self.accept("invariant"):
                while True:
                    lt = self.ident("invariant label")
                    label = lt.text
                    spans.setdefault(f"invariant {label}", lt.span)
                    self.expect(":")
                    invariants.append(Property(label, "invariant", self.expr()))
                    self.accept(";")
                    if not (self.peek().kind == "ID" and self.at(":", 1)):
                        break
            elif self.accept("event"):
                spans.setdefault(f"event {self.peek().text}", self.peek().span)
                events.append(self.event())
            elif self.accept("property"):
                spans.setdefault(f"property {self.peek().text}", self.peek().span)
                properties.append(self.property())
            elif self.accept("derivation"):
                spans.setdefault(f"derivation {self.peek().text}", self.peek().span)
                derivations.append(self.derivation())
            elif self.accept("depends"):
                lt = self.ident("property label")
                label = lt.text
                spans.setdefault(f"depends {label}", lt.span)
                self.expect("->")
                deps.append((label, self.ident("event name").text))
                while self.accept(","):
                    deps.append((label, self.ident("event name").text))
            elif self.accept("witness"):
                et = self.ident("event name")
                ev = et.text
                if not (self.accept(".") or self.accept("APPDOT")):
                    self.error("expected '.'")
                ix = self.ident("index name").text
                spans.setdefault(f"witness {ev}.{ix}", et.span)
                self.expect(":=")
                witnesses.append(Witness(ev, ix, self.expr()))
            else:
                self.error("expected a section keyword or 'end'", t)
            self.accept(";")
        if self.peek().kind != "EOF":
            self.error("expected end of input after 'end'")
        return Machine(
            name=name, sorts=tuple(sorts), variables=tuple(variables), init=init,
            invariants=tuple(invariants), events=tuple(events),
            properties=tuple(properties), refines=refines,
            derivations=tuple(derivations), dependencies=tuple(deps),
            witnesses=tuple(witnesses), spans=spans,
        )

    def sort_section(self, sorts: list, spans: dict):
        while True:
            tok = self.ident("sort name")
            spans.setdefault(f"sort {tok.text}", tok.span)
            self.expect("=")
            if self.accept("int"):
                lo = self.integer()
                self.expect("..")
                hi = self.integer()
                modular = bool(self.accept("mod"))
                sorts.append(self._mk_sort(tok, name=tok.text, kind="int", lo=lo, hi=hi, modular=modular))
            else:
                self.expect("{")
                items = [self.ident("element name").text]
                while self.accept(","):
                    items.append(self.ident("element name").text)
                self.expect("}")
                owners = set()
                for it in items:
                    for s in sorts:
                        if s.kind == "enum" and s.parent is None and it in s.carrier:
                            owners.add(s.name)
                if owners and len(owners) > 1:
                    raise ParseError([Diagnostic(tok.span, "sort", f"subsort {tok.text} mixes elements of {sorted(owners)}")])
                parent = owners.pop() if owners else None
                if parent is not None:
                    psort = next(s for s in sorts if s.name == parent)
                    missing = [it for it in items if it not in psort.carrier]
                    if missing:
                        raise ParseError([Diagnostic(tok.span, "sort", f"elements {missing} of {tok.text} are not in {parent}")])
                sorts.append(self._mk_sort(tok, name=tok.text, kind="enum", carrier=tuple(items), parent=parent))
            self.accept(";")
            if not (self.peek().kind == "ID" and self.at("=", 1)):
                return

    def _mk_sort(self, tok: Token, **kw) -> Sort:
        try:
            return Sort(**kw)
        except Exception as exc:
            raise ParseError([Diagnostic(tok.span, "sort", str(exc))])

    def event(self) -> Event:
        name = self.ident("event name").text
        indices = ()
        if self.accept("["):
            indices = self.binders(("]",))
            self.expect("]")
        clauses = {}
        while True:
            t = self.peek()
            if t.text in ("during", "upon", "when") and t.kind == "KW":
                if t.text in clauses:
                    self.error(f"duplicate '{t.text}' clause")
                self.next()
                clauses[t.text] = self.expr()
            else:
                break
        self.expect("then")
        action = []
        while not self.at("end"):
            action.append(self.assignment())
            if not self.accept(";"):
                break
        self.expect("end")
        return Event(name, indices, clauses.get("during"), clauses.get("upon"),
                     clauses.get("when"), tuple(action))

    def assignment(self) -> Assignment:
        first = self.ident("assigned variable")
        targets = [first.text]
        if self.at(","):
            while self.accept(","):
                targets.append(self.ident("assigned variable").text)
            self.expect(":|")
            return Assignment("st", tuple(targets), self.expr())
        arg = None
        if self.at("(") and not self.peek().space_before:
            self.next()
            arg = self.expr()
            self.expect(")")
        elif self.at("APPDOT"):
            self.next()
            arg = self.atom()
        t = self.peek()
        if self.accept(":="):
            return Assignment("det", (first.text,), self.expr(), arg)
        if self.accept("::"):
            return Assignment("in", (first.text,), self.expr(), arg)
        if self.accept(":|") and arg is None:
            return Assignment("st", (first.text,), self.expr())
        self.error("expected ':=', '::' or ':|'", t)

    def property(self) -> Property:
        label = self.ident("property label").text
        free = ()
        if self.accept("["):
            free = self.binders(("]",))
            self.expect("]")
        self.expect(":")
        if self.accept("tr"):
            return Property(label, "transient", self.expr(), None, free)
        p = self.expr()
        if self.accept("~>"):
            return Property(label, "leadsto", p, self.expr(), free)
        if self.accept("un"):
            return Property(label, "unless", p, self.expr(), free)
        self.error("expected '~>' or 'un'")

    def derivation(self) -> Derivation:
        label = self.ident("property label").text
        self.expect("by")
        steps = [self.step()]
        while self.at(";") and self.peek(1).kind == "ID" and self.peek(1).text in STEP_WORDS:
            self.next()
            steps.append(self.step())
        return Derivation(label, tuple(steps))

    def step(self) -> Step:
        t = self.ident("rule name")
        w = t.text
        if w in ("implication", "split", "mc"):
            return Step(w)
        if w == "trans":
            self.expect("(")
            preds = [self.expr()]
            while self.accept(","):
                preds.append(self.expr())
            self.expect(")")
            return Step("trans", tuple(preds))
        if w == "ensure":
            self.expect("(")
            lab = self.ident("unless label").text
            self.expect(")")
            return Step("ensure", labels=(lab,))
        if w == "induction":
            self.expect("(")
            v = self.expr()
            name = "M"
            if self.accept(","):
                name = self.ident("variable name").text
            self.expect(")")
            return Step("induction", (v,), name=name)
        if w == "psp":
            self.expect("(")
            a = self.ident("leads-to label").text
            self.expect(",")
            b = self.ident("unless label").text
            self.expect(")")
            return Step("psp", labels=(a, b))
        if w == "transient":
            if self.peek().kind == "ID" and self.peek().text == "via":
                self.next()
                kw = self.ident("'falsifies'")
                if kw.text != "falsifies":
                    self.error("expected 'falsifies'", kw)
                ev = self.ident("event name").text
                idx = []
                if self.accept("["):
                    idx.append(self.expr())
                    while self.accept(","):
                        idx.append(self.expr())
                    self.expect("]")
                tag = None
                if self.peek().kind == "ID" and self.peek().text == "as":
                    self.next()
                    t = self.next()
                    if t.kind not in ("NUM", "ID"):
                        self.error("expected an obligation tag", t)
                    tag = t.text
                return Step("falsifies", event=ev, index_exprs=tuple(idx), tag=tag)
            return Step("transient")
        if w == "cite":
            return Step("cite", labels=(self.ident("property label").text,))
        if w == "reuse":
            m = self.ident("machine name").text
            if not (self.accept(".") or self.accept("APPDOT")):
                self.error("expected '.'")
            return Step("reuse", labels=(self.ident("property label").text,), machine=m)
        self.error("expected a rule name", t)


def parse_raw_machine(text: str, file: Optional[str] = None) -> Machine:
    """Parse without resolution or checking."""
    p = _Parser(tokenize(text, file), file)
    m = p.machine()
    return replace(m, source=file)


def parse_machine(text: str, file: Optional[str] = None) -> Machine:
    """Parse, resolve, sort-check and normalize a machine; raise ParseError."""
    from .typecheck import typecheck_machine_full

    raw = parse_raw_machine(text, file)
    try:
        norm = normalize(raw)
    except Exception as exc:
        raise ParseError(_located(raw, [Diagnostic(None, "structure", str(exc))]))
    resolved, diags = typecheck_machine_full(norm, file)
    if diags:
        raise ParseError(_located(raw, diags))
    return resolved


def _located(m: Machine, diags: list) -> list:
    """Give span-less diagnostics the span of their declaration."""
    spans = m.spans or {}
    out = []
    for d in diags:
        if d.span is None:
            span = spans.get(d.where) or spans.get("machine")
            d = Diagnostic(span, d.kind, d.message, d.where)
        out.append(d)
    return out


def typecheck_machine(machine: Machine) -> list:
    """Diagnostics for an already built machine as (location, message) pairs."""
    from .typecheck import typecheck_machine_full

    _, diags = typecheck_machine_full(machine, machine.source)
    return [(d.location, d.message) for d in diags]


def parse_predicate(text: str, context: Machine, bound: Optional[dict] = None,
                    allow_primed: bool = False) -> Expr:
    """Parse a predicate in the scope of ``context`` (plus bound names)."""
    from .typecheck import Checker

    p = _Parser(tokenize(text), None)
    e = p.expr()
    if p.peek().kind != "EOF":
        p.error("unexpected trailing input")
    ck = Checker(context)
    out, ty = ck.expr(e, dict(bound or {}), allow_primed)
    if not ck.diags and ty is not None and ty != BOOL:
        ck.err(e, "sort", f"predicate expected, got {ty}")
    if ck.diags:
        raise ParseError(ck.diags)
    return out


def parse_expression(text: str, context: Machine, bound: Optional[dict] = None):
    from .typecheck import Checker

    p = _Parser(tokenize(text), None)
    e = p.expr()
    if p.peek().kind != "EOF":
        p.error("unexpected trailing input")
    ck = Checker(context)
    out, ty = ck.expr(e, dict(bound or {}), False)
    if ck.diags:
        raise ParseError(ck.diags)
    return out, ty


# ---------------------------------------------------------------------------
# Pretty printing

_PREC = {
    "iff": 1, "implies": 2, "or": 3, "and": 4, "not": 5,
    "eq": 6, "member": 6, "subset": 6, "lt": 6, "le": 6,
    "interval": 7,
    "union": 8, "inter": 8, "diff": 8, "domsub": 8, "ransub": 8, "ovl": 8,
    "add": 9, "sub": 9,
    "apply": 10,
}
_INFIX = {
    "eq": "=", "member": "in", "subset": "subset", "lt": "<", "le": "<=",
    "union": "union", "inter": "inter", "diff": "\\", "domsub": "domsub",
    "ransub": "ransub", "ovl": "ovl", "add": "+", "sub": "-", "iff": "<=>",
    "interval": "..",
}


def _prec(e: Expr) -> int:
    if e.op == "not" and e.args[0].op in ("eq", "member"):
        return 6
    if e.op == "int" and e.value < 0:
        return 10
    return _PREC.get(e.op, 11)


def show_expr(e: Expr, need: int = 0) -> str:
    s = _show(e)
    if _prec(e) < need:
        return f"({s})"
    return s


def _show(e: Expr) -> str:
    op = e.op
    if op == "bool":
        return "true" if e.value else "false"
    if op == "int":
        return str(e.value)
    if op in ("var", "name"):
        return e.name + ("'" if e.primed else "")
    if op in ("bvar", "elem", "sortset"):
        return e.name
    if op == "not":
        a = e.args[0]
        if a.op == "eq":
            return f"{show_expr(a.args[0], 7)} /= {show_expr(a.args[1], 7)}"
        if a.op == "member":
            return f"{show_expr(a.args[0], 7)} notin {show_expr(a.args[1], 7)}"
        return "not " + show_expr(a, 5)
    if op in ("and", "or"):
        p = _PREC[op]
        return f" {op} ".join(show_expr(a, p + 1) for a in e.args)
    if op == "implies":
        return f"{show_expr(e.args[0], 3)} => {show_expr(e.args[1], 2)}"
    if op in ("forall", "exists"):
        bs = ", ".join(f"{n} : {s}" for n, s in e.binders)
        rng, term = e.args
        if rng.op == "bool" and rng.value is True:
            return f"{op} ({bs} . {show_expr(term)})"
        return f"{op} ({bs} | {show_expr(rng)} . {show_expr(term)})"
    if op == "setlit":
        return "{" + ", ".join(_show_item(a) for a in e.args) + "}"
    if op == "maplet":
        return _show_item(e)
    if op in ("dom", "ran", "inv", "wd"):
        return f"{op}({show_expr(e.args[0])})"
    if op == "img":
        return f"img({show_expr(e.args[0])}, {show_expr(e.args[1])})"
    if op == "apply":
        return f"{show_expr(e.args[0], 10)}({show_expr(e.args[1])})"
    if op in _INFIX:
        p = _PREC[op]
        if p == 6 or op == "interval" or op == "iff":
            # non-associative (or right operand strictly tighter)
            return f"{show_expr(e.args[0], p + 1)} {_INFIX[op]} {show_expr(e.args[1], p + 1)}"
        return f"{show_expr(e.args[0], p)} {_INFIX[op]} {show_expr(e.args[1], p + 1)}"
    raise ValueError(f"cannot print node {op}")


def _show_item(e: Expr) -> str:
    if e.op == "maplet":
        return f"{show_expr(e.args[0], 7)} |-> {show_expr(e.args[1], 7)}"
    return show_expr(e, 7)


def show_type(t: Type) -> str:
    if t.kind == "bool":
        return "bool"
    if t.kind == "elem":
        return t.sort
    if t.kind == "set":
        return f"set({t.sort})"
    if t.kind == "pfun":
        return f"{t.sort} +-> {t.cod}"
    if t.kind == "tfun":
        return f"{t.sort} --> {t.cod}"
    return str(t)


def _show_binders(bs) -> str:
    return ", ".join(f"{n} : {s}" for n, s in bs)


def show_assignment(a: Assignment) -> str:
    if a.kind == "st":
        return f"{', '.join(a.targets)} :| {show_expr(a.expr)}"
    lhs = a.target if a.arg is None else f"{a.target}({show_expr(a.arg)})"
    sym = ":=" if a.kind == "det" else "::"
    return f"{lhs} {sym} {show_expr(a.expr)}"


def show_step(s: Step) -> str:
    if s.rule in ("implication", "split", "mc", "transient"):
        return s.rule
    if s.rule == "trans":
        return "trans(" + ", ".join(show_expr(p) for p in s.preds) + ")"
    if s.rule == "ensure":
        return f"ensure({s.labels[0]})"
    if s.rule == "induction":
        tail = "" if s.name == "M" else f", {s.name}"
        return f"induction({show_expr(s.preds[0])}{tail})"
    if s.rule == "psp":
        return f"psp({s.labels[0]}, {s.labels[1]})"
    if s.rule == "falsifies":
        idx = ""
        if s.index_exprs:
            idx = "[" + ", ".join(show_expr(x) for x in s.index_exprs) + "]"
        tag = f" as {s.tag}" if s.tag else ""
        return f"transient via falsifies {s.event}{idx}{tag}"
    if s.rule == "cite":
        return f"cite {s.labels[0]}"
    if s.rule == "reuse":
        return f"reuse {s.machine}.{s.labels[0]}"
    raise ValueError(s.rule)


def show_property(p: Property) -> str:
    free = f" [{_show_binders(p.free)}]" if p.free else ""
    return f"property {p.label}{free} : {p.describe()}"


def pretty(m: Machine) -> str:
    out = [f"machine {m.name}" + (f" refines {m.refines}" if m.refines else "")]
    if m.sorts:
        out.append("  sets")
        rows = []
        for s in m.sorts:
            if s.kind == "int":
                rows.append(f"    {s.name} = int {s.lo} .. {s.hi}" + (" mod" if s.modular else ""))
            else:
                rows.append(f"    {s.name} = {{{', '.join(s.carrier)}}}")
        out.append(";\n".join(rows))
    if m.variables:
        out.append("  vars")
        out.append(";\n".join(f"    {v.name} : {show_type(v.type)}" for v in m.variables))
    out.append(f"  init {show_expr(m.init)}")
    if m.invariants:
        out.append("  invariant")
        out.append(";\n".join(f"    {i.label} : {show_expr(i.p)}" for i in m.invariants))
    for ev in m.events:
        if ev.is_skip:
            continue
        head = f"  event {ev.name}"
        if ev.indices:
            head += f" [{_show_binders(ev.indices)}]"
        out.append(head)
        coarse_default = ev.coarse == FALSE and (ev.fine is None or ev.fine == TRUE)
        if ev.coarse is not None and not coarse_default:
            out.append(f"    during {show_expr(ev.coarse)}")
        elif coarse_default:
            out.append("    -- unscheduled: during false (default)")
        if ev.fine is not None and ev.fine != TRUE:
            out.append(f"    upon {show_expr(ev.fine)}")
        if ev.guard is not None and ev.guard != TRUE:
            out.append(f"    when {show_expr(ev.guard)}")
        out.append("    then")
        if ev.action:
            out.append(";\n".join(f"      {show_assignment(a)}" for a in ev.action))
        out.append("    end")
    for p in m.properties:
        out.append("  " + show_property(p))
    for d in m.derivations:
        out.append(f"  derivation {d.label} by " + " ; ".join(show_step(s) for s in d.steps))
    by_label: dict = {}
    for lab, ev in m.dependencies:
        by_label.setdefault(lab, []).append(ev)
    for lab, evs in by_label.items():
        out.append(f"  depends {lab} -> {', '.join(evs)}")
    for w in m.witnesses:
        out.append(f"  witness {w.event} . {w.index} := {show_expr(w.expr)}")
    out.append("end")
    return "\n".join(out) + "\n"


__all__ = [
    "Diagnostic", "ParseError", "SourceSpan", "parse_machine", "parse_predicate",
    "parse_expression", "parse_raw_machine", "pretty", "show_expr", "tokenize",
    "INT_LITERAL",
]
