"""A one-bit ProbNetKAT fragment with truncated finite semantics.

Programs act on packet sets: finite sets of histories, each history a
tuple of bits written most recent first. At truncation level n every
history keeps at most n bits. The star of a program is the distribution
of the union of all packet sets visited by the Markov chain the program
generates; it is computed exactly by following the transient part of the
chain and completing each path with the ergodic class it falls into.
"""

import itertools
import logging
import math
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from errors import (
    InvalidArgument,
    NumericFailure,
    PairBudgetExceeded,
    ParseError,
    StarNotAllowed,
    StateBudgetExceeded,
    UnsupportedProgram,
)

logger = logging.getLogger(__name__)

History = Tuple[int, ...]
PacketSet = FrozenSet[History]
Distribution = Dict[PacketSet, float]

NORMALIZATION_TOL = 1e-9
MAX_SWEEPS = 100_000  # steps of the transient enumeration before giving up
MC_CELLS_PER_CHUNK = 50_000_000  # samples x states booleans held at once


# Program syntax


@dataclass(frozen=True)
class Assign0:
    def __str__(self) -> str:
        return "p0!"


@dataclass(frozen=True)
class Assign1:
    def __str__(self) -> str:
        return "p1!"


@dataclass(frozen=True)
class Dup:
    def __str__(self) -> str:
        return "dup"


@dataclass(frozen=True)
class Seq:
    left: "Program"
    right: "Program"

    def __str__(self) -> str:
        left = f"({self.left})" if isinstance(self.left, Choice) else str(self.left)
        right = (
            f"({self.right})" if isinstance(self.right, (Choice, Seq)) else str(self.right)
        )
        return f"{left} ; {right}"


@dataclass(frozen=True)
class Choice:
    lam: float  # probability of the left branch
    left: "Program"
    right: "Program"

    def __str__(self) -> str:
        right = f"({self.right})" if isinstance(self.right, Choice) else str(self.right)
        return f"{self.left} +[{self.lam!r}] {right}"


@dataclass(frozen=True)
class Star:
    body: "Program"

    def __str__(self) -> str:
        return f"({self.body})*"


Program = Union[Assign0, Assign1, Dup, Seq, Choice, Star]
Primitive = Union[Assign0, Assign1, Dup]


def contains_star(program: Program) -> bool:
    if isinstance(program, Star):
        return True
    if isinstance(program, Seq):
        return contains_star(program.left) or contains_star(program.right)
    if isinstance(program, Choice):
        return contains_star(program.left) or contains_star(program.right)
    return False


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    position: int

    def describe(self) -> str:
        return "end of input" if self.kind == "end" else repr(self.text)


_NUMBER = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_WORDS = {"p0!": "assign", "p1!": "assign", "dup": "dup"}
_PUNCTUATION = set(";+[]()*")
ATOM_START = ["p0!", "p1!", "dup", "("]


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    i = 0
    while i < len(text):
        if text[i].isspace():
            i += 1
            continue
        word = next((w for w in _WORDS if text.startswith(w, i)), None)
        if word is not None:
            tokens.append(Token(_WORDS[word], word, i))
            i += len(word)
            continue
        if text[i] in _PUNCTUATION:
            tokens.append(Token(text[i], text[i], i))
            i += 1
            continue
        number = _NUMBER.match(text, i)
        if number:
            tokens.append(Token("number", number.group(), i))
            i = number.end()
            continue
        raise ParseError(i, ATOM_START + [";", "+[", ")", "*"], repr(text[i]))
    tokens.append(Token("end", "", len(text)))
    return tokens


class _Parser:
    """Recursive descent over the token list.

    choice  := seq ('+' '[' NUMBER ']' seq)*
    seq     := postfix (';' postfix)*
    postfix := 'p0!' | 'p1!' | 'dup' | '(' choice ')' ['*']
    """

    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        token = self.tokens[self.i]
        self.i += 1
        return token

    def expect(self, kind: str, expected: Sequence[str]) -> Token:
        token = self.peek()
        if token.kind != kind:
            raise ParseError(token.position, expected, token.describe())
        return self.advance()

    def program(self) -> Program:
        node = self.choice()
        self.expect("end", [";", "+[", "end of input"])
        return node

    def choice(self) -> Program:
        left = self.seq()
        while self.peek().kind == "+":
            self.advance()
            self.expect("[", ["["])
            number = self.expect("number", ["a probability"])
            lam = float(number.text)
            if not 0.0 <= lam <= 1.0:
                raise ParseError(
                    number.position,
                    ["a probability"],
                    number.text,
                    reason=f"choice probability {number.text} is outside [0, 1]",
                )
            self.expect("]", ["]"])
            left = Choice(lam, left, self.seq())
        return left

    def seq(self) -> Program:
        left = self.postfix()
        while self.peek().kind == ";":
            self.advance()
            left = Seq(left, self.postfix())
        return left

    def postfix(self) -> Program:
        token = self.peek()
        if token.kind == "assign":
            self.advance()
            return Assign0() if token.text == "p0!" else Assign1()
        if token.kind == "dup":
            self.advance()
            return Dup()
        if token.kind == "(":
            self.advance()
            inner = self.choice()
            self.expect(")", [";", "+[", ")"])
            if self.peek().kind == "*":
                star = self.advance()
                if contains_star(inner):
                    raise ParseError(
                        star.position, [], "*", reason="nested star is not supported"
                    )
                return Star(inner)
            return inner
        raise ParseError(token.position, ATOM_START, token.describe())


def parse_program(text: str) -> Program:
    """Parse program text; ';' binds tighter than '+[p]' and both associate left"""
    return _Parser(text).program()


# Histories and packet sets


def _check_history(history: History, level: int):
    if not history:
        raise InvalidArgument("histories must be non-empty")
    if len(history) > level:
        raise InvalidArgument(
            f"history {format_history(history)} is longer than level {level}"
        )
    if any(bit not in (0, 1) for bit in history):
        raise InvalidArgument(f"history {history!r} contains a non-bit")


def check_packet_set(packets: PacketSet, level: int):
    if level < 1:
        raise InvalidArgument(f"truncation level must be at least 1, got {level}")
    for history in packets:
        _check_history(history, level)


def history_key(history: History) -> Tuple[int, History]:
    return len(history), history


def packet_set_key(packets: PacketSet) -> Tuple[int, Tuple[Tuple[int, History], ...]]:
    """Total order on packet sets: smaller sets first, then by sorted histories"""
    return len(packets), tuple(sorted(history_key(h) for h in packets))


def format_history(history: History) -> str:
    return "(" + ",".join(str(bit) for bit in history) + ")"


def format_packet_set(packets: PacketSet) -> str:
    ordered = sorted(packets, key=history_key)
    return "{" + ",".join(format_history(h) for h in ordered) + "}"


_HISTORY = re.compile(r"\(\s*([01](?:\s*,\s*[01])*)\s*\)")
_PACKET_SET = re.compile(r"\{\s*(?:\([^()]*\)\s*(?:,\s*\([^()]*\)\s*)*)?\}")


def parse_history(text: str) -> History:
    """Parse a history literal such as ``(1,0)``; leftmost bit is the most recent"""
    match = _HISTORY.fullmatch(text.strip())
    if not match:
        raise InvalidArgument(f"expected a history like (1,0), got {text!r}")
    return tuple(int(bit) for bit in re.split(r"\s*,\s*", match.group(1)))


def parse_packet_set(text: str) -> PacketSet:
    """Parse a packet-set literal such as ``{(0),(1,0)}``"""
    text = text.strip()
    if not _PACKET_SET.fullmatch(text):
        raise InvalidArgument(f"expected a packet set like {{(0),(1,0)}}, got {text!r}")
    return frozenset(parse_history(h) for h in re.findall(r"\([^()]*\)", text))


def all_histories(length: int) -> PacketSet:
    return frozenset(itertools.product((0, 1), repeat=length))


# Star-free semantics


def apply_primitive(program: Primitive, packets: PacketSet, level: int) -> PacketSet:
    """Direct image of a packet set under an assignment or dup"""
    if isinstance(program, Assign0):
        return frozenset((0,) + h[1:] for h in packets)
    if isinstance(program, Assign1):
        return frozenset((1,) + h[1:] for h in packets)
    if isinstance(program, Dup):
        return frozenset(((h[0],) + h)[:level] for h in packets)
    raise InvalidArgument(f"{program} is not a primitive")


def _accumulate(target: Distribution, packets: PacketSet, probability: float):
    if probability > 0:
        target[packets] = target.get(packets, 0.0) + probability


def step_distribution(program: Program, packets: PacketSet, level: int) -> Distribution:
    """Output distribution of a star-free program on one packet set"""
    if isinstance(program, Star):
        raise StarNotAllowed(f"{program} contains a star")
    if isinstance(program, (Assign0, Assign1, Dup)):
        return {apply_primitive(program, packets, level): 1.0}
    result: Distribution = {}
    if isinstance(program, Choice):
        branches = ((program.lam, program.left), (1 - program.lam, program.right))
        for weight, branch in branches:
            if weight > 0:
                for outcome, p in step_distribution(branch, packets, level).items():
                    _accumulate(result, outcome, weight * p)
        return result
    if isinstance(program, Seq):
        for middle, p in step_distribution(program.left, packets, level).items():
            for outcome, r in step_distribution(program.right, middle, level).items():
                _accumulate(result, outcome, p * r)
        return result
    raise InvalidArgument(f"unknown program node {program!r}")


# Reachable chain


@dataclass(frozen=True, eq=False)
class ReachableChain:
    """States reachable from an initial distribution, with sparse transitions"""

    states: Tuple[PacketSet, ...]
    transitions: sparse.csr_matrix
    initial: np.ndarray
    level: int

    @property
    def size(self) -> int:
        return len(self.states)

    def index(self, packets: PacketSet) -> int:
        return self.states.index(packets)

    def states_containing(self, history: History) -> np.ndarray:
        return np.array([history in s for s in self.states], dtype=bool)


def _as_distribution(
    initial: Union[PacketSet, Mapping[PacketSet, float]],
) -> Distribution:
    if isinstance(initial, frozenset):
        return {initial: 1.0}
    distribution = {frozenset(s): float(p) for s, p in initial.items() if p > 0}
    total = sum(distribution.values())
    if not distribution or abs(total - 1.0) > NORMALIZATION_TOL:
        raise InvalidArgument(f"initial distribution sums to {total!r}, expected 1")
    return distribution


def build_chain(
    body: Program,
    initial: Union[PacketSet, Mapping[PacketSet, float]],
    level: int,
    state_budget: int,
) -> ReachableChain:
    """Breadth-first closure of the states the body can reach"""
    if state_budget < 1:
        raise InvalidArgument(f"state budget must be positive, got {state_budget}")
    start = _as_distribution(initial)
    for packets in start:
        check_packet_set(packets, level)

    states: List[PacketSet] = []
    index: Dict[PacketSet, int] = {}
    queue: deque = deque()

    def visit(packets: PacketSet) -> int:
        if packets not in index:
            if len(states) >= state_budget:
                raise StateBudgetExceeded(len(states) + 1, state_budget)
            index[packets] = len(states)
            states.append(packets)
            queue.append(packets)
        return index[packets]

    for packets in sorted(start, key=packet_set_key):
        visit(packets)

    rows: List[int] = []
    cols: List[int] = []
    values: List[float] = []
    while queue:
        packets = queue.popleft()
        source = index[packets]
        for outcome, p in step_distribution(body, packets, level).items():
            rows.append(source)
            cols.append(visit(outcome))
            values.append(p)

    size = len(states)
    transitions = sparse.csr_matrix((values, (rows, cols)), shape=(size, size))
    initial_vector = np.zeros(size)
    for packets, p in start.items():
        initial_vector[index[packets]] = p
    logger.info("reachable chain at level %d: %d states", level, size)
    return ReachableChain(tuple(states), transitions, initial_vector, level)


def ergodic_classes(chain: ReachableChain) -> List[np.ndarray]:
    """Bottom strongly connected components, ordered by their first state"""
    count, labels = connected_components(
        chain.transitions, directed=True, connection="strong"
    )
    edges = chain.transitions.tocoo()
    leaving = labels[edges.row] != labels[edges.col]
    open_components = set(labels[edges.row[leaving]].tolist())
    classes = [
        np.flatnonzero(labels == c) for c in range(count) if c not in open_components
    ]
    return sorted(classes, key=lambda members: int(members[0]))


def class_transition_matrix(chain: ReachableChain, members: np.ndarray) -> np.ndarray:
    return chain.transitions[members][:, members].toarray()


def stationary_distribution(matrix: np.ndarray) -> np.ndarray:
    """Left eigenvector for eigenvalue 1 of an irreducible stochastic matrix"""
    values, vectors = np.linalg.eig(np.asarray(matrix, dtype=float).T)
    k = int(np.argmin(np.abs(values - 1.0)))
    stationary = np.real(vectors[:, k])
    stationary = stationary / stationary.sum()
    return np.clip(stationary, 0.0, None)


def _can_reach(chain: ReachableChain, targets: np.ndarray) -> np.ndarray:
    reach = targets.copy()
    while True:
        grown = reach | (chain.transitions @ reach.astype(float) > 0)
        if (grown == reach).all():
            return reach
        reach = grown


def hitting_probability(chain: ReachableChain, targets: np.ndarray) -> np.ndarray:
    """Probability, from each state, of ever visiting a target state (now included)"""
    targets = np.asarray(targets, dtype=bool)
    result = targets.astype(float)
    unknown = _can_reach(chain, targets) & ~targets
    if unknown.any():
        inner = chain.transitions[unknown][:, unknown]
        escape = np.asarray(chain.transitions[unknown][:, targets].sum(axis=1)).ravel()
        system = sparse.identity(int(unknown.sum()), format="csc") - inner.tocsc()
        result[unknown] = np.atleast_1d(spsolve(system, escape))
    return result


def prob_member_hitting(chain: ReachableChain, history: History) -> float:
    """P(history is ever present) by a linear solve on the chain"""
    _check_history(history, chain.level)
    targets = chain.states_containing(history)
    return float(chain.initial @ hitting_probability(chain, targets))


# Star semantics


@dataclass(frozen=True, eq=False)
class StarResult:
    """Distribution of the union of visited packet sets.

    Query answers are memoized in cache, the only field that changes after
    construction; the answers themselves depend on union_support alone.
    """

    union_support: Tuple[Tuple[PacketSet, float], ...]
    level: int
    chain: Optional[ReachableChain] = None
    exact: bool = True
    samples: int = 0
    residual: float = 0.0  # transient mass folded in when enumeration stopped
    cache: Dict[Tuple, float] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        total = sum(p for _, p in self.union_support)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise NumericFailure(f"union distribution sums to {total!r}")

    @classmethod
    def from_distribution(cls, distribution: Distribution, level: int, **kwargs):
        support = tuple(
            (packets, distribution[packets])
            for packets in sorted(distribution, key=packet_set_key)
        )
        return cls(support, level, **kwargs)


def _ergodic_completion(
    chain: ReachableChain,
) -> Tuple[np.ndarray, List[np.ndarray], List[PacketSet]]:
    classes = ergodic_classes(chain)
    class_of = np.full(chain.size, -1)
    unions: List[PacketSet] = []
    for c, members in enumerate(classes):
        class_of[members] = c
        unions.append(frozenset().union(*(chain.states[i] for i in members)))
    logger.info("%d ergodic classes, sizes %s", len(classes), [m.size for m in classes])
    return class_of, classes, unions


def star_eval(
    body: Program,
    initial: Union[PacketSet, Mapping[PacketSet, float]],
    level: int,
    state_budget: int,
    pair_budget: int,
    residual_mass: float = 1e-12,
) -> StarResult:
    """Exact distribution of the union of every packet set the body's chain visits"""
    chain = build_chain(body, initial, level, state_budget)
    class_of, _, class_unions = _ergodic_completion(chain)
    P = chain.transitions
    absorbed: Distribution = {}
    seen: set = set()

    def place(target: Dict, state: int, union: PacketSet, p: float):
        union = union | chain.states[state]
        if class_of[state] >= 0:
            _accumulate(absorbed, union | class_unions[class_of[state]], p)
            return
        key = (state, union)
        if key not in seen:
            seen.add(key)
            if len(seen) > pair_budget:
                raise PairBudgetExceeded(len(seen), pair_budget)
        target[key] = target.get(key, 0.0) + p

    current: Dict[Tuple[int, PacketSet], float] = {}
    for state in np.flatnonzero(chain.initial):
        place(current, int(state), frozenset(), float(chain.initial[state]))

    sweeps = 0
    while current and sum(current.values()) >= residual_mass:
        sweeps += 1
        if sweeps > MAX_SWEEPS:
            raise NumericFailure(
                f"transient mass {sum(current.values()):.3g} left after {MAX_SWEEPS} steps"
            )
        following: Dict[Tuple[int, PacketSet], float] = {}
        for (state, union), p in current.items():
            start, end = P.indptr[state], P.indptr[state + 1]
            for j, w in zip(P.indices[start:end], P.data[start:end]):
                place(following, int(j), union, p * w)
        current = following

    residual = sum(current.values())
    for (_, union), p in current.items():
        _accumulate(absorbed, union, p)
    logger.info(
        "path unions: %d pairs over %d steps, residual %.3g",
        len(seen),
        sweeps,
        residual,
    )
    return StarResult.from_distribution(absorbed, level, chain=chain, residual=residual)


def monte_carlo_star(
    body: Program,
    initial: Union[PacketSet, Mapping[PacketSet, float]],
    level: int,
    samples: int,
    horizon: int,
    seed: int,
    state_budget: int,
) -> StarResult:
    """Empirical union distribution from simulated paths.

    Each path runs for ``horizon`` steps and is then completed with the
    ergodic class of its final state, if it has reached one.
    """
    if samples < 1 or horizon < 1:
        raise InvalidArgument("samples and horizon must both be at least 1")
    chain = build_chain(body, initial, level, state_budget)
    class_of, classes, _ = _ergodic_completion(chain)
    P = chain.transitions

    degree = np.diff(P.indptr)
    width = int(degree.max())
    successors = np.zeros((chain.size, width), dtype=int)
    cumulative = np.ones((chain.size, width))
    for i in range(chain.size):
        start, end = P.indptr[i], P.indptr[i + 1]
        successors[i, : end - start] = P.indices[start:end]
        cumulative[i, : end - start] = np.cumsum(P.data[start:end])
        cumulative[i, end - start - 1 :] = 1.0

    rng = np.random.default_rng(seed)
    counts: Dict[PacketSet, int] = {}
    chunk = max(1, MC_CELLS_PER_CHUNK // chain.size)
    for offset in range(0, samples, chunk):
        size = min(chunk, samples - offset)
        rows = np.arange(size)
        state = rng.choice(chain.size, size=size, p=chain.initial)
        visited = np.zeros((size, chain.size), dtype=bool)
        visited[rows, state] = True
        for _ in range(horizon):
            u = rng.random(size)
            column = np.minimum((cumulative[state] < u[:, None]).sum(axis=1), width - 1)
            state = successors[state, column]
            visited[rows, state] = True
        for c, members in enumerate(classes):
            landed = class_of[state] == c
            visited[np.ix_(landed, members)] = True
        patterns, tally = np.unique(visited, axis=0, return_counts=True)
        for pattern, n in zip(patterns, tally):
            hit = np.flatnonzero(pattern)
            union = frozenset().union(*(chain.states[i] for i in hit))
            counts[union] = counts.get(union, 0) + int(n)

    distribution = {union: n / samples for union, n in counts.items()}
    return StarResult.from_distribution(
        distribution, level, chain=chain, exact=False, samples=samples
    )


def binomial_stderr(p: float, samples: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / samples)


# Queries


def prob_member(result: StarResult, history: History) -> float:
    _check_history(history, result.level)
    key = ("member", history)
    if key not in result.cache:
        result.cache[key] = sum(
            p for union, p in result.union_support if history in union
        )
    return result.cache[key]


def prob_superset(result: StarResult, packets: PacketSet) -> float:
    check_packet_set(packets, result.level)
    key = ("superset", packets)
    if key not in result.cache:
        result.cache[key] = sum(
            p for union, p in result.union_support if packets <= union
        )
    return result.cache[key]


@dataclass(frozen=True)
class Query:
    """``member:(1,0)``, ``superset:{(0),(1)}`` or ``superset-all-level``"""

    text: str
    kind: str
    histories: PacketSet

    def answer(self, result: StarResult) -> float:
        if self.kind == "member":
            (history,) = self.histories
            return prob_member(result, history)
        return prob_superset(result, self.histories)

    def hitting(self, chain: ReachableChain) -> Optional[float]:
        """Linear-solve cross-check, available for membership queries"""
        if self.kind != "member":
            return None
        (history,) = self.histories
        return prob_member_hitting(chain, history)


def parse_query(text: str, level: int) -> Query:
    text = text.strip()
    if text == "superset-all-level":
        return Query(text, "superset", all_histories(level))
    kind, _, literal = text.partition(":")
    if kind == "member":
        return Query(text, "member", frozenset([parse_history(literal)]))
    if kind == "superset":
        return Query(text, "superset", parse_packet_set(literal))
    raise InvalidArgument(
        f"unknown query {text!r}; use member:(..), superset:{{..}} or superset-all-level"
    )


# Whole programs


def star_decomposition(
    program: Program, packets: PacketSet, level: int
) -> Tuple[Optional[Program], Distribution]:
    """Split a program into (starred body, distribution entering the star).

    Star-free programs have no body; the distribution is their output.
    """
    check_packet_set(packets, level)
    if not contains_star(program):
        return None, step_distribution(program, packets, level)
    if isinstance(program, Star) and not contains_star(program.body):
        return program.body, {packets: 1.0}
    if (
        isinstance(program, Seq)
        and isinstance(program.right, Star)
        and not contains_star(program.left)
        and not contains_star(program.right.body)
    ):
        return program.right.body, step_distribution(program.left, packets, level)
    raise UnsupportedProgram(
        f"{program}: only a star-free program, a star, or a star-free prefix "
        "followed by one star can be evaluated"
    )


def evaluate_program(
    program: Program,
    packets: PacketSet,
    level: int,
    state_budget: int,
    pair_budget: int,
    residual_mass: float = 1e-12,
) -> StarResult:
    body, entering = star_decomposition(program, packets, level)
    if body is None:
        return StarResult.from_distribution(entering, level)
    return star_eval(body, entering, level, state_budget, pair_budget, residual_mass)
