"""Knowledge graph: a fact base over catalog + provenance, a positive
recursive Datalog engine with a string-concat head builtin, and
conjunctive queries.

Rule text: `head :- atom, atom.`  Query text: `?- atom, atom.`
Variables start uppercase; constants are lowercase identifiers, quoted
strings, or numbers. `concat(a, b)` (also spelled `ig:concat`) may
appear in head terms only, nested freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import (
    DepthExceeded,
    InvalidMetadata,
    MalformedJson,
    UnknownPredicate,
    UnsafeRule,
)

MAX_DERIVATION_DEPTH = 64
LABEL_SEPARATOR = " + "


# -- terms ----------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    value: str


@dataclass(frozen=True)
class ConcatTerm:
    left: object  # Var | Const | ConcatTerm
    right: object


@dataclass(frozen=True)
class Atom:
    predicate: str
    terms: tuple

    def variables(self) -> set[str]:
        out: set[str] = set()
        for t in self.terms:
            out |= _term_vars(t)
        return out


def _term_vars(term) -> set[str]:
    if isinstance(term, Var):
        return {term.name}
    if isinstance(term, ConcatTerm):
        return _term_vars(term.left) | _term_vars(term.right)
    return set()


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple


# -- text syntax ----------------------------------------------------------

_IDENT_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_CHARS = _IDENT_START | set("0123456789-")


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
            continue
        if c == "%":  # comment to end of line
            while i < n and text[i] != "\n":
                i += 1
            continue
        if text.startswith(":-", i):
            tokens.append(("op", ":-"))
            i += 2
            continue
        if text.startswith("?-", i):
            tokens.append(("op", "?-"))
            i += 2
            continue
        if c in "(),.":
            tokens.append(("punct", c))
            i += 1
            continue
        if c in "'\"":
            quote = c
            i += 1
            start = i
            while i < n and text[i] != quote:
                i += 1
            if i >= n:
                raise MalformedJson(f"unterminated string in rule text: {text[start-1:start+20]!r}")
            tokens.append(("string", text[start:i]))
            i += 1
            continue
        if c.isdigit():
            start = i
            while i < n and (text[i].isdigit() or text[i] == "."):
                i += 1
            tokens.append(("number", text[start:i]))
            continue
        if c in _IDENT_START:
            start = i
            while i < n and text[i] in _IDENT_CHARS:
                i += 1
            word = text[start:i]
            # the namespaced spelling of the concat builtin
            if word == "ig" and text.startswith(":concat", i):
                word = "concat"
                i += len(":concat")
            tokens.append(("ident", word))
            continue
        raise MalformedJson(f"unexpected character {c!r} in rule text")
    return tokens


class _RuleParser:
    def __init__(self, tokens: list[tuple[str, str]]):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else ("eof", "")

    def take(self, kind=None, text=None):
        tok = self.peek()
        if kind and tok[0] != kind or text and tok[1] != text:
            raise MalformedJson(f"expected {text or kind} in rule text, got {tok[1]!r}")
        self.pos += 1
        return tok

    def at_end(self) -> bool:
        return self.pos >= len(self.tokens)

    def term(self, allow_concat: bool):
        kind, text = self.peek()
        if kind == "string":
            self.take()
            return Const(text)
        if kind == "number":
            self.take()
            return Const(text)
        if kind == "ident":
            self.take()
            if text == "concat" and self.peek() == ("punct", "("):
                if not allow_concat:
                    raise UnsafeRule("concat is a head-only builtin")
                self.take("punct", "(")
                left = self.term(allow_concat)
                self.take("punct", ",")
                right = self.term(allow_concat)
                self.take("punct", ")")
                return ConcatTerm(left, right)
            if text[0].isupper():
                return Var(text)
            return Const(text)
        raise MalformedJson(f"expected a term, got {text!r}")

    def atom(self, allow_concat: bool) -> Atom:
        _, name = self.take("ident")
        self.take("punct", "(")
        terms = [self.term(allow_concat)]
        while self.peek() == ("punct", ","):
            self.take()
            terms.append(self.term(allow_concat))
        self.take("punct", ")")
        return Atom(name, tuple(terms))


def parse_program(text: str) -> tuple[list[Rule], list[Atom]]:
    """Parse rules and ground facts from Datalog text."""
    parser = _RuleParser(_tokenize(text))
    rules: list[Rule] = []
    facts: list[Atom] = []
    while not parser.at_end():
        head = parser.atom(allow_concat=True)
        if parser.peek() == ("op", ":-"):
            parser.take()
            body = [parser.atom(allow_concat=False)]
            while parser.peek() == ("punct", ","):
                parser.take()
                body.append(parser.atom(allow_concat=False))
            parser.take("punct", ".")
            rules.append(Rule(head, tuple(body)))
        else:
            parser.take("punct", ".")
            if head.variables() or any(isinstance(t, ConcatTerm) for t in head.terms):
                raise UnsafeRule(f"fact {head.predicate} must be ground")
            facts.append(head)
    return rules, facts


def parse_query(text: str) -> list[Atom]:
    tokens = _tokenize(text)
    parser = _RuleParser(tokens)
    if parser.peek() == ("op", "?-"):
        parser.take()
    atoms = [parser.atom(allow_concat=False)]
    while parser.peek() == ("punct", ","):
        parser.take()
        atoms.append(parser.atom(allow_concat=False))
    if parser.peek() == ("punct", "."):
        parser.take()
    if not parser.at_end():
        raise MalformedJson("trailing tokens after query")
    return atoms


# the derivation rules over the base vocabulary: every recorded run is an
# activity, and dataset-producing runs compose into a labelled
# transformation relation, transitively with " + "-joined labels
DEFAULT_RULES = """
is_activity(IDMR) :- model_run(IDMR).
is_activity(IDMT) :- model_training(IDMT).
is_activity(IDTR) :- trans_run(IDTR).
transformation(IDDSI, Name, IDDSO) :- has_input(IDTR, IDDSI), uses(IDTR, IDTF), has_name(IDTF, Name), has_output(IDDSO, IDTR), dataSet(IDDSO).
transformation(X, ig:concat(W1, ig:concat(" + ", W2)), Z) :- transformation(X, W1, Y), transformation(Y, W2, Z).
"""


# -- fact base ------------------------------------------------------------


@dataclass
class FactBase:
    facts: set = field(default_factory=set)  # {(predicate, (terms...))}
    derived: set = field(default_factory=set)
    arity: dict = field(default_factory=dict)

    def add(self, predicate: str, *terms: str, derived: bool = False):
        terms = tuple(str(t) for t in terms)
        known = self.arity.get(predicate)
        if known is None:
            self.arity[predicate] = len(terms)
        elif known != len(terms):
            raise InvalidMetadata(f"predicate {predicate!r} used with arity {len(terms)} and {known}")
        fact = (predicate, terms)
        (self.derived if derived else self.facts).add(fact)

    def all_facts(self) -> set:
        return self.facts | self.derived

    def by_predicate(self, predicate: str) -> list[tuple]:
        return [f for f in self.all_facts() if f[0] == predicate]

    def has(self, predicate: str, *terms: str) -> bool:
        return (predicate, tuple(str(t) for t in terms)) in self.all_facts()

    def copy(self) -> "FactBase":
        return FactBase(set(self.facts), set(self.derived), dict(self.arity))


def build_facts(catalog, provenance) -> FactBase:
    """Materialize catalog artifacts and provenance links as base facts."""
    fb = FactBase()
    entity_pred = {"dataset": "dataSet", "model": "model", "dataflow": "dataFlow"}
    function_gids: dict[str, str] = {}
    for record in catalog.artifacts():
        if record.kind == "function":
            if record.metadata.get("kind") == "learner":
                fb.add("learner", record.gid)
            fb.add("has_name", record.gid, record.name)
            function_gids.setdefault(record.name, record.gid)
        else:
            fb.add(entity_pred[record.kind], record.gid)
        if record.domain:
            fb.add("in_domain", record.gid, record.domain)
        if record.version_of:
            fb.add("version_of", record.gid, record.version_of)

    run_pred = {"train": "model_training", "predict": "model_run"}
    synthetic_fns: set[str] = set()

    def function_atom(alias: str) -> str:
        fn = function_gids.get(alias)
        if fn is None:
            fn = f"fn:{alias}"
            if fn not in synthetic_fns:
                synthetic_fns.add(fn)
                fb.add("has_name", fn, alias)
        return fn

    # every executed operator is an activity of its kind
    for trace in provenance.store.records("trace"):
        run_atom = f"{trace['run_id']}:{trace['node_id']}"
        fb.add(run_pred.get(trace.get("operator"), "trans_run"), run_atom)
        alias = trace.get("function_alias")
        if alias:
            fb.add("uses", run_atom, function_atom(alias))

    # artifact-level dataflow: inputs and outputs of producing operators
    for link in provenance.store.records("link"):
        run_atom = f"{link['run_id']}:{link['node_id']}"
        fb.add(run_pred.get(link["operator"], "trans_run"), run_atom)
        for gid in link["input_gids"]:
            fb.add("has_input", run_atom, gid)
        fb.add("has_output", link["produced_gid"], run_atom)
        fb.add("uses", run_atom, function_atom(link["function_alias"]))
    return fb


# -- evaluation -----------------------------------------------------------


def _check_safety(rule: Rule):
    body_vars: set[str] = set()
    for atom in rule.body:
        for t in atom.terms:
            if isinstance(t, ConcatTerm):
                raise UnsafeRule("concat may not appear in rule bodies")
            body_vars |= _term_vars(t)
    for v in rule.head.variables():
        if v not in body_vars:
            raise UnsafeRule(v)
    if not rule.body:
        raise UnsafeRule(f"rule for {rule.head.predicate} has an empty body")


def _match(atom: Atom, fact: tuple, binding: dict) -> dict | None:
    if atom.predicate != fact[0] or len(atom.terms) != len(fact[1]):
        return None
    out = dict(binding)
    for term, value in zip(atom.terms, fact[1]):
        if isinstance(term, Const):
            if term.value != value:
                return None
        elif isinstance(term, Var):
            bound = out.get(term.name)
            if bound is None:
                out[term.name] = value
            elif bound != value:
                return None
        else:  # pragma: no cover - concat rejected earlier
            return None
    return out


def _ground(term, binding: dict, max_depth: int = 0) -> str:
    if isinstance(term, Const):
        return term.value
    if isinstance(term, Var):
        return binding[term.name]
    value = _ground(term.left, binding, max_depth) + _ground(term.right, binding, max_depth)
    if max_depth and value.count(LABEL_SEPARATOR) >= max_depth:
        # a label of >= max_depth segments implies a derivation chain at
        # least that deep; cyclic inputs would grow labels forever
        raise DepthExceeded(f"concat label exceeds {max_depth} segments")
    return value


def _has_concat(rule: Rule) -> bool:
    return any(isinstance(t, ConcatTerm) for t in rule.head.terms)


def evaluate(base: FactBase, rules: list[Rule], max_depth: int = MAX_DERIVATION_DEPTH) -> FactBase:
    """Least fixpoint by semi-naive iteration.

    Concat-free programs always terminate; programs with the concat
    builtin are cut off after `max_depth` rounds (cyclic inputs would
    otherwise mint labels forever)."""
    for rule in rules:
        _check_safety(rule)
    fb = base.copy()
    total: set = fb.all_facts()
    by_pred: dict[str, set] = {}
    for f in total:
        by_pred.setdefault(f[0], set()).add(f)
    for rule in rules:
        fb.arity.setdefault(rule.head.predicate, len(rule.head.terms))

    concat_present = any(_has_concat(r) for r in rules)
    delta = set(total)
    rounds = 0
    while delta:
        rounds += 1
        if concat_present and rounds > max_depth:
            raise DepthExceeded(f"no fixpoint within {max_depth} rounds")
        new_facts: set = set()
        for rule in rules:
            for pivot_index, pivot in enumerate(rule.body):
                pivot_delta = [f for f in delta if f[0] == pivot.predicate]
                if not pivot_delta:
                    continue
                for fact in pivot_delta:
                    seed = _match(pivot, fact, {})
                    if seed is None:
                        continue
                    bindings = [seed]
                    for j, atom in enumerate(rule.body):
                        if j == pivot_index:
                            continue
                        next_bindings = []
                        for b in bindings:
                            for cand in by_pred.get(atom.predicate, ()):  # full relation
                                extended = _match(atom, cand, b)
                                if extended is not None:
                                    next_bindings.append(extended)
                        bindings = next_bindings
                        if not bindings:
                            break
                    for b in bindings:
                        head_fact = (
                            rule.head.predicate,
                            tuple(_ground(t, b, max_depth) for t in rule.head.terms),
                        )
                        if head_fact not in total:
                            new_facts.add(head_fact)
        for f in new_facts:
            total.add(f)
            by_pred.setdefault(f[0], set()).add(f)
            fb.derived.add(f)
        delta = new_facts
    return fb


def naive_evaluate(base: FactBase, rules: list[Rule], max_depth: int = MAX_DERIVATION_DEPTH) -> FactBase:
    """Straightforward iterate-all-rules-to-fixpoint evaluation. Slower
    than `evaluate`; kept as an independent reference."""
    for rule in rules:
        _check_safety(rule)
    fb = base.copy()
    for rule in rules:
        fb.arity.setdefault(rule.head.predicate, len(rule.head.terms))
    concat_present = any(_has_concat(r) for r in rules)
    rounds = 0
    while True:
        rounds += 1
        if concat_present and rounds > max_depth:
            raise DepthExceeded(f"no fixpoint within {max_depth} rounds")
        total = fb.all_facts()
        added = False
        for rule in rules:
            bindings = [dict()]
            for atom in rule.body:
                next_bindings = []
                for b in bindings:
                    for cand in total:
                        extended = _match(atom, cand, b)
                        if extended is not None:
                            next_bindings.append(extended)
                bindings = next_bindings
            for b in bindings:
                head_fact = (rule.head.predicate, tuple(_ground(t, b, max_depth) for t in rule.head.terms))
                if head_fact not in total and head_fact not in fb.derived:
                    fb.derived.add(head_fact)
                    added = True
        if not added:
            return fb


def query(fb: FactBase, atoms: list[Atom] | str) -> list[dict]:
    """All satisfying bindings of a conjunctive query, deduplicated and
    sorted by binding tuple."""
    if isinstance(atoms, str):
        atoms = parse_query(atoms)
    for atom in atoms:
        if atom.predicate not in fb.arity:
            raise UnknownPredicate(atom.predicate)
        for t in atom.terms:
            if isinstance(t, ConcatTerm):
                raise UnsafeRule("concat may not appear in queries")
    bindings = [dict()]
    for atom in atoms:
        candidates = fb.by_predicate(atom.predicate)
        next_bindings = []
        for b in bindings:
            for fact in candidates:
                extended = _match(atom, fact, b)
                if extended is not None:
                    next_bindings.append(extended)
        bindings = next_bindings
    unique = {tuple(sorted(b.items())): b for b in bindings}
    return [dict(items) for items in sorted(unique)]
