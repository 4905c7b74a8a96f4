"""
Tests for the ProbNetKAT fragment: parsing, finite semantics and star evaluation.
"""
import numpy as np
import pytest

from errors import (
    InvalidArgument,
    PairBudgetExceeded,
    ParseError,
    StarNotAllowed,
    StateBudgetExceeded,
    UnsupportedProgram,
)
from probnetkat import (
    Assign0,
    Assign1,
    Choice,
    Dup,
    Seq,
    Star,
    all_histories,
    apply_primitive,
    binomial_stderr,
    build_chain,
    class_transition_matrix,
    ergodic_classes,
    evaluate_program,
    format_packet_set,
    monte_carlo_star,
    parse_history,
    parse_packet_set,
    parse_program,
    parse_query,
    prob_member,
    prob_member_hitting,
    prob_superset,
    star_decomposition,
    star_eval,
    stationary_distribution,
    step_distribution,
)

START = frozenset([(0,)])


def cantor_parts(text, level):
    """Body of the star and the distribution entering it."""
    return star_decomposition(parse_program(text), START, level)


@pytest.fixture
def cantor(cantor_text):
    """Exact star evaluation of the Cantor program at level 3."""
    body, entering = cantor_parts(cantor_text, 3)
    return star_eval(body, entering, 3, state_budget=1000, pair_budget=10_000)


class TestParser:
    """Program text to syntax trees and back."""

    def test_precedence(self):
        """';' binds tighter than a choice."""
        program = parse_program("p0! ; dup +[0.5] p1!")
        assert program == Choice(0.5, Seq(Assign0(), Dup()), Assign1())

    def test_left_association(self):
        """Sequences and choices group to the left."""
        assert parse_program("p0! ; p1! ; dup") == Seq(Seq(Assign0(), Assign1()), Dup())
        assert parse_program("p0! +[0.5] p1! +[0.25] dup") == Choice(
            0.25, Choice(0.5, Assign0(), Assign1()), Dup()
        )

    def test_star_of_group(self, cantor_text):
        """A starred group becomes the body of a star."""
        program = parse_program(cantor_text)
        assert isinstance(program, Seq)
        assert program.right == Star(Seq(Dup(), Choice(0.5, Assign0(), Assign1())))

    @pytest.mark.parametrize(
        "text",
        [
            "(p0! +[0.5] p1!) ; ((dup ; (p0! +[0.5] p1!)))*",
            "p0! ; (p1! +[0.25] (dup +[0.75] p0!))",
            "(p0! ; p1!)* ",
            "(p0! +[0.5] p1!) ; dup",
        ],
    )
    def test_printing_parses_back(self, text):
        """Printed programs parse to the same tree."""
        program = parse_program(text)
        assert parse_program(str(program)) == program

    @pytest.mark.parametrize("lam", [0.1234567, 1 / 3, 1e-05, 0.0, 1.0])
    def test_printed_weights_are_exact(self, lam):
        """Choice weights survive printing and parsing without rounding."""
        program = Choice(lam, Assign0(), Seq(Dup(), Assign1()))
        assert parse_program(str(program)) == program

    def test_dangling_operator(self):
        """A trailing ';' reports the end of input."""
        with pytest.raises(ParseError) as excinfo:
            parse_program("p0! ;")
        assert excinfo.value.position == 5
        assert excinfo.value.found == "end of input"

    def test_probability_out_of_range(self):
        """Choice weights must lie in [0, 1]."""
        with pytest.raises(ParseError) as excinfo:
            parse_program("p0! +[1.5] p1!")
        assert "outside [0, 1]" in str(excinfo.value)

    def test_nested_star(self):
        """A star inside a starred group is rejected."""
        with pytest.raises(ParseError) as excinfo:
            parse_program("((p0!)*)*")
        assert "nested star" in str(excinfo.value)

    @pytest.mark.parametrize("text", ["p2!", "p0!*", "(p0!", "p0! +[0.5", ""])
    def test_malformed(self, text):
        """Anything off the grammar is a parse error."""
        with pytest.raises(ParseError):
            parse_program(text)


class TestLiterals:
    """History and packet-set literals."""

    def test_history(self):
        """Leftmost bit is the most recent one."""
        assert parse_history(" ( 1 , 0 ) ") == (1, 0)

    def test_packet_set(self):
        """Packet sets are sets of histories, printed shortest first."""
        packets = parse_packet_set("{(1,0), (0), (1,0)}")
        assert packets == frozenset([(0,), (1, 0)])
        assert format_packet_set(packets) == "{(0),(1,0)}"

    def test_empty_packet_set(self):
        """The empty set is allowed."""
        assert parse_packet_set("{}") == frozenset()

    @pytest.mark.parametrize("text", ["(2)", "()", "1,0", "(1,0"])
    def test_bad_history(self, text):
        """Histories are non-empty bit tuples in parentheses."""
        with pytest.raises(InvalidArgument):
            parse_history(text)


class TestStarFreeSemantics:
    """Primitives and the output distribution of star-free programs."""

    def test_assignments_rewrite_the_head(self):
        """Assignments set the most recent bit, merging equal histories."""
        packets = frozenset([(0, 1), (1, 1)])
        assert apply_primitive(Assign0(), packets, 3) == frozenset([(0, 1)])
        assert apply_primitive(Assign1(), packets, 3) == frozenset([(1, 1)])

    def test_dup_truncates(self):
        """dup copies the head and drops bits beyond the level."""
        assert apply_primitive(Dup(), frozenset([(1, 0)]), 3) == frozenset([(1, 1, 0)])
        assert apply_primitive(Dup(), frozenset([(1, 0, 1)]), 3) == frozenset([(1, 1, 0)])

    def test_empty_set_is_fixed(self):
        """Every primitive maps the empty set to itself."""
        for primitive in (Assign0(), Assign1(), Dup()):
            assert apply_primitive(primitive, frozenset(), 3) == frozenset()

    def test_choice_weights(self):
        """A biased coin splits the mass accordingly."""
        result = step_distribution(parse_program("p0! +[0.25] p1!"), frozenset([(1, 1)]), 3)
        assert result == {frozenset([(0, 1)]): 0.25, frozenset([(1, 1)]): 0.75}

    def test_sequence_sums_to_one(self):
        """Nested choices in sequence still give a probability distribution."""
        program = parse_program("(p0! +[0.5] p1!) ; dup ; (p0! +[0.75] (dup +[0.5] p1!))")
        result = step_distribution(program, frozenset([(0,), (1, 0)]), 3)
        assert sum(result.values()) == pytest.approx(1.0, abs=1e-12)

    def test_star_rejected(self):
        """Star-free evaluation refuses a star."""
        with pytest.raises(StarNotAllowed):
            step_distribution(Star(Dup()), START, 3)


class TestReachableChain:
    """States, ergodic classes and hitting probabilities."""

    def test_cantor_state_count(self, cantor_text):
        """The Cantor body reaches the 14 singletons of histories up to length 3."""
        body, entering = cantor_parts(cantor_text, 3)
        chain = build_chain(body, entering, 3, state_budget=1000)
        assert chain.size == 14
        singletons = {frozenset([h]) for n in (1, 2, 3) for h in all_histories(n)}
        assert set(chain.states) == singletons
        assert np.allclose(np.asarray(chain.transitions.sum(axis=1)).ravel(), 1.0)

    def test_state_budget(self, cantor_text):
        """Exceeding the state budget reports how far it got."""
        body, entering = cantor_parts(cantor_text, 3)
        with pytest.raises(StateBudgetExceeded) as excinfo:
            build_chain(body, entering, 3, state_budget=5)
        assert excinfo.value.count == 6 and excinfo.value.budget == 5

    def test_ergodic_class_and_stationary(self, cantor):
        """One bottom class of length-3 singletons with a uniform stationary law."""
        (members,) = ergodic_classes(cantor.chain)
        assert {cantor.chain.states[i] for i in members} == {
            frozenset([h]) for h in all_histories(3)
        }
        stationary = stationary_distribution(class_transition_matrix(cantor.chain, members))
        assert np.max(np.abs(stationary - 0.125)) <= 1e-12

    def test_absorbing_states_are_classes(self):
        """Each absorbing state is its own ergodic class."""
        chain = build_chain(Assign0(), frozenset([(1,)]), 2, state_budget=10)
        classes = ergodic_classes(chain)
        assert [chain.states[int(c[0])] for c in classes] == [frozenset([(0,)])]

    def test_hitting_agrees_with_enumeration(self, cantor):
        """Linear solves match the path-union probabilities."""
        for n in (1, 2, 3):
            for history in all_histories(n):
                assert prob_member_hitting(cantor.chain, history) == pytest.approx(
                    prob_member(cantor, history), abs=1e-9
                )


class TestStarEvaluation:
    """Distribution of the union of visited packet sets."""

    def test_cantor_values(self, cantor):
        """Known probabilities for the Cantor program at level 3."""
        assert prob_member(cantor, (1,)) == pytest.approx(0.5, abs=1e-9)
        assert prob_member(cantor, (1, 0)) == pytest.approx(0.25, abs=1e-9)
        assert prob_member(cantor, (0, 1)) == pytest.approx(0.25, abs=1e-9)
        assert prob_superset(cantor, all_histories(3)) == pytest.approx(1.0, abs=1e-9)
        assert prob_superset(cantor, frozenset([(0,), (1,)])) == 0.0

    def test_cantor_support(self, cantor):
        """Four unions, each holding every length-3 history."""
        assert len(cantor.union_support) == 4
        for union, p in cantor.union_support:
            assert all_histories(3) <= union
            assert p == pytest.approx(0.25)
        assert cantor.residual <= 1e-12

    @pytest.mark.parametrize("level", [3, 4, 5])
    def test_level_stability(self, cantor_text, level):
        """Questions about short histories do not depend on the level."""
        body, entering = cantor_parts(cantor_text, level)
        result = star_eval(body, entering, level, state_budget=1000, pair_budget=100_000)
        assert prob_member(result, (1,)) == pytest.approx(0.5, abs=1e-9)
        for history in all_histories(2):
            assert prob_member(result, history) == pytest.approx(0.25, abs=1e-9)
        assert prob_superset(result, frozenset([(0,), (1,)])) == 0.0

    def test_pair_budget(self, cantor_text):
        """Too small a pair budget stops the enumeration."""
        body, entering = cantor_parts(cantor_text, 3)
        with pytest.raises(PairBudgetExceeded):
            star_eval(body, entering, 3, state_budget=1000, pair_budget=2)

    def test_query_results_are_cached(self, cantor):
        """Repeated queries reuse the stored answer."""
        prob_member(cantor, (1,))
        assert cantor.cache[("member", (1,))] == pytest.approx(0.5)

    def test_caching_leaves_the_distribution_alone(self, cantor):
        """Answering queries only fills the cache."""
        support = cantor.union_support
        first = [prob_member(cantor, (1,)), prob_superset(cantor, frozenset([(0,)]))]
        second = [prob_member(cantor, (1,)), prob_superset(cantor, frozenset([(0,)]))]
        assert first == second
        assert cantor.union_support is support

    def test_history_longer_than_level(self, cantor):
        """Queries cannot mention histories beyond the level."""
        with pytest.raises(InvalidArgument):
            prob_member(cantor, (0, 0, 0, 0))


class TestMonteCarlo:
    """Simulated estimates of the union distribution."""

    def test_cantor_estimates(self, cantor, cantor_text):
        """10^5 paths of 50 steps agree with the exact answers within 0.01."""
        body, entering = cantor_parts(cantor_text, 3)
        sampled = monte_carlo_star(body, entering, 3, 100_000, 50, 42, 1000)
        assert sampled.samples == 100_000 and not sampled.exact
        for history in [(1,), (0,), (1, 0), (0, 1), (1, 1)]:
            assert abs(prob_member(sampled, history) - prob_member(cantor, history)) <= 0.01
        assert prob_superset(sampled, all_histories(3)) == pytest.approx(1.0)

    def test_seeded(self, cantor_text):
        """The same seed gives the same estimate."""
        body, entering = cantor_parts(cantor_text, 3)
        first = monte_carlo_star(body, entering, 3, 2000, 10, 7, 1000)
        second = monte_carlo_star(body, entering, 3, 2000, 10, 7, 1000)
        assert first.union_support == second.union_support

    def test_invalid_sizes(self, cantor_text):
        """Samples and horizon must be positive."""
        body, entering = cantor_parts(cantor_text, 3)
        with pytest.raises(InvalidArgument):
            monte_carlo_star(body, entering, 3, 0, 10, 7, 1000)

    def test_binomial_stderr(self):
        """Standard error of a proportion."""
        assert binomial_stderr(0.5, 100) == pytest.approx(0.05)
        assert binomial_stderr(0.0, 100) == 0.0


class TestQueriesAndPrograms:
    """Query parsing and whole-program evaluation."""

    def test_parse_queries(self):
        """The three query forms."""
        assert parse_query("member:(1,0)", 3).histories == frozenset([(1, 0)])
        superset = parse_query("superset:{(0),(1)}", 3)
        assert superset.kind == "superset" and len(superset.histories) == 2
        assert parse_query("superset-all-level", 2).histories == all_histories(2)

    def test_unknown_query(self):
        """Unknown query kinds are rejected."""
        with pytest.raises(InvalidArgument):
            parse_query("exists:(1)", 3)

    def test_hitting_only_for_membership(self, cantor):
        """Superset queries have no linear-solve cross-check."""
        assert parse_query("superset-all-level", 3).hitting(cantor.chain) is None
        member = parse_query("member:(1)", 3)
        assert member.hitting(cantor.chain) == pytest.approx(0.5, abs=1e-9)

    def test_star_free_program(self):
        """A star-free program is evaluated directly."""
        result = evaluate_program(
            parse_program("p0! +[0.5] p1!"), START, 2, state_budget=10, pair_budget=10
        )
        assert prob_member(result, (1,)) == pytest.approx(0.5)
        assert result.chain is None

    def test_bare_star(self):
        """A star alone starts from the input set."""
        result = evaluate_program(
            parse_program("(p1!)*"), START, 2, state_budget=10, pair_budget=10
        )
        assert prob_superset(result, frozenset([(0,), (1,)])) == pytest.approx(1.0)

    def test_unsupported_shape(self):
        """Anything after a star is not supported."""
        with pytest.raises(UnsupportedProgram):
            star_decomposition(parse_program("(p0!)* ; dup"), START, 2)
