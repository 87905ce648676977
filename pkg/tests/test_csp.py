import tempfile
import unittest
from fractions import Fraction
from pathlib import Path

import numpy as np

from amcsp.csp import (
    Assignment,
    Csp,
    GapProfile,
    MerlinVar,
    Sampled,
    Verdict,
    classify_promise,
    format_csp,
    gap_profile,
    make_constraint,
    max_count_batch,
    max_val_batch,
    max_val_over_z,
    parse_csp,
    read_csp,
    satisfied_count,
    val,
    write_csp,
)
from amcsp.errors import FormatError, LimitExceededError
from amcsp.hamming import all_bit_rows


def toy_csp(**kwargs) -> Csp:
    """r1 in {0,1}, x in {0,1,2}.

    (r1, x): r1=0 wants x=0, r1=1 wants x=2; (x): x != 2.
    Max over x is 1 at r1=0 and 1/2 at r1=1.
    """
    pair = [[1, 0, 0], [0, 0, 1]]
    single = [1, 1, 0]
    return Csp(
        n_arthur=1,
        merlin=(MerlinVar("x", 3),),
        constraints=(make_constraint((0, 1), pair), make_constraint((1,), single)),
        **kwargs,
    )


def random_hub_csp(seed: int, *, hub: bool) -> Csp:
    rng = np.random.default_rng(seed)
    merlin = (MerlinVar("h", 3), MerlinVar("a", 2), MerlinVar("b", 4))
    sizes = {0: 2, 1: 2, 2: 3, 3: 2, 4: 4}
    scopes = [(0, 2), (2, 3), (4, 2), (1, 4), (3,), (2,), (1, 3), (0,)]
    constraints = tuple(
        make_constraint(scope, rng.integers(0, 2, size=tuple(sizes[v] for v in scope))) for scope in scopes
    )
    return Csp(n_arthur=2, merlin=merlin, constraints=constraints, hub=2 if hub else None)


class TestCspModel(unittest.TestCase):
    def test_properties(self):
        csp = toy_csp()
        self.assertEqual(csp.n_vars, 2)
        self.assertEqual(csp.m, 2)
        self.assertEqual(csp.alphabet(0), 2)
        self.assertEqual(csp.alphabet(1), 3)
        self.assertEqual(csp.var_name(0), "r1")
        self.assertEqual(csp.var_name(1), "x")
        self.assertEqual(csp.merlin_space, 3)

    def test_table_shape_must_match_alphabets(self):
        with self.assertRaisesRegex(ValueError, "alphabet product"):
            Csp(n_arthur=1, merlin=(MerlinVar("x", 3),), constraints=(make_constraint((0, 1), [[1, 0], [0, 1]]),))

    def test_scope_checks(self):
        with self.assertRaisesRegex(ValueError, "exceeds arity"):
            Csp(n_arthur=3, merlin=(), constraints=(make_constraint((0, 1, 2), np.ones((2, 2, 2))),))
        with self.assertRaisesRegex(ValueError, "repeated variable"):
            Csp(n_arthur=1, merlin=(), constraints=(make_constraint((0, 0), np.ones((2, 2))),))
        with self.assertRaisesRegex(ValueError, "out of range"):
            Csp(n_arthur=1, merlin=(), constraints=(make_constraint((1,), [1, 1]),))

    def test_merlin_names(self):
        with self.assertRaisesRegex(ValueError, "invalid merlin variable name"):
            Csp(n_arthur=1, merlin=(MerlinVar("r2", 2),), constraints=())
        with self.assertRaisesRegex(ValueError, "duplicate"):
            Csp(n_arthur=0, merlin=(MerlinVar("x", 2), MerlinVar("x", 2)), constraints=())
        with self.assertRaisesRegex(ValueError, "empty alphabet"):
            Csp(n_arthur=0, merlin=(MerlinVar("x", 0),), constraints=())

    def test_hub_must_be_first_merlin_variable(self):
        with self.assertRaisesRegex(ValueError, "hub must be the first merlin variable"):
            Csp(n_arthur=1, merlin=(MerlinVar("x", 2), MerlinVar("y", 2)), constraints=(), hub=2)


class TestValue(unittest.TestCase):
    def test_val_counts_satisfied_constraints(self):
        csp = toy_csp()
        self.assertEqual(val(csp, Assignment(r=(0,), z=(0,))), 1)
        self.assertEqual(val(csp, Assignment(r=(1,), z=(2,))), Fraction(1, 2))
        self.assertEqual(satisfied_count(csp, Assignment(r=(1,), z=(1,))), 1)

    def test_empty_constraint_list_has_value_one(self):
        csp = Csp(n_arthur=2, merlin=(), constraints=())
        self.assertEqual(val(csp, Assignment(r=(0, 1))), 1)
        self.assertEqual(max_val_over_z(csp, (1, 1)), (Fraction(1), ()))

    def test_assignment_checks(self):
        csp = toy_csp()
        with self.assertRaisesRegex(ValueError, "out of range for x"):
            val(csp, Assignment(r=(0,), z=(3,)))
        with self.assertRaisesRegex(ValueError, "does not match arthur count"):
            val(csp, Assignment(r=(0, 1), z=(0,)))

    def test_max_val_over_z_returns_first_maximizer(self):
        csp = toy_csp()
        self.assertEqual(max_val_over_z(csp, (0,)), (Fraction(1), (0,)))
        self.assertEqual(max_val_over_z(csp, (1,)), (Fraction(1, 2), (0,)))

    def test_max_val_batch(self):
        self.assertEqual(max_val_batch(toy_csp(), all_bit_rows(1)), [Fraction(1), Fraction(1, 2)])

    def test_hub_maximization_matches_brute_force(self):
        rows = all_bit_rows(2)
        for seed in range(10):
            with_hub = random_hub_csp(seed, hub=True)
            without = random_hub_csp(seed, hub=False)
            hub_counts, hub_z = max_count_batch(with_hub, rows)
            brute_counts, _ = max_count_batch(without, rows)
            np.testing.assert_array_equal(hub_counts, brute_counts, err_msg=f"seed={seed}")
            for row, count, z in zip(rows, hub_counts, hub_z):
                a = Assignment(r=tuple(int(b) for b in row), z=tuple(int(s) for s in z))
                self.assertEqual(satisfied_count(with_hub, a), count)

    def test_brute_force_limit(self):
        csp = random_hub_csp(0, hub=False)
        with self.assertRaisesRegex(LimitExceededError, "merlin search space"):
            max_count_batch(csp, all_bit_rows(2), limit_merlin=4)


class TestGapProfile(unittest.TestCase):
    def test_exhaustive_profile(self):
        profile = gap_profile(toy_csp())
        self.assertTrue(profile.exhaustive)
        self.assertEqual(profile.records, ((0, Fraction(1)), (1, Fraction(1, 2))))
        self.assertEqual(profile.frac_full, 0.5)
        self.assertEqual(profile.frac_above(Fraction(1, 2)), 0.5)
        self.assertEqual(profile.frac_above(Fraction(3, 4)), 1.0)
        self.assertEqual(profile.min_value, Fraction(1, 2))
        self.assertEqual(profile.stderr(0.5), 0.0)

    def test_exhaustive_limit(self):
        with self.assertRaises(LimitExceededError):
            gap_profile(toy_csp(), limit_arthur=0)

    def test_sampled_profile_is_seeded(self):
        a = gap_profile(toy_csp(), Sampled(trials=64, seed=3))
        b = gap_profile(toy_csp(), Sampled(trials=64, seed=3))
        self.assertEqual(a.records, b.records)
        self.assertEqual(a.count, 64)
        self.assertFalse(a.exhaustive)
        self.assertGreater(a.stderr(0.5), 0)
        for r, v in a.records:
            self.assertEqual(v, Fraction(1) if r == 0 else Fraction(1, 2))

    def test_sampled_rejects_negative_trials(self):
        with self.assertRaisesRegex(ValueError, "non-negative"):
            gap_profile(toy_csp(), Sampled(trials=-1, seed=0))

    def test_empty_profile(self):
        profile = gap_profile(toy_csp(), Sampled(trials=0, seed=0))
        self.assertEqual(profile.frac_full, 0.0)
        self.assertEqual(profile.frac_above(0.5), 0.0)


class TestClassifyPromise(unittest.TestCase):
    def profile(self, *values) -> GapProfile:
        return GapProfile(n_arthur=2, m=4, records=tuple(enumerate(values)), exhaustive=True)

    def test_yes_when_every_challenge_is_fully_satisfiable(self):
        self.assertEqual(classify_promise(self.profile(1, 1, 1, 1), Fraction(1, 4), 0.5), Verdict.YES)

    def test_no_when_few_challenges_are_nearly_satisfiable(self):
        values = (Fraction(1), Fraction(1, 2), Fraction(1, 2), Fraction(1, 4))
        self.assertEqual(classify_promise(self.profile(*values), Fraction(1, 4), 0.25), Verdict.NO)

    def test_neither(self):
        values = (Fraction(1), Fraction(1), Fraction(1, 2), Fraction(1, 4))
        self.assertEqual(classify_promise(self.profile(*values), Fraction(1, 4), 0.25), Verdict.NEITHER)

    def test_out_of_range_parameters_give_neither(self):
        mixed = self.profile(Fraction(1), Fraction(1, 2), Fraction(1, 2), Fraction(1, 4))
        for epsilon, s in ((0, 0.5), (Fraction(3, 2), 0.5), (Fraction(1, 4), 1), (Fraction(1, 4), -0.1)):
            self.assertEqual(classify_promise(mixed, epsilon, s), Verdict.NEITHER, msg=f"{epsilon} {s}")
        self.assertEqual(classify_promise(self.profile(1, 1, 1, 1), Fraction(1, 4), 1), Verdict.YES)


class TestTextFormat(unittest.TestCase):
    def test_round_trip_with_meta_and_hub(self):
        csp = random_hub_csp(4, hub=True)
        csp = Csp(
            n_arthur=csp.n_arthur,
            merlin=csp.merlin,
            constraints=csp.constraints,
            meta={"source": "unit", "epsilon": "1/2"},
            hub=csp.hub,
        )
        self.assertEqual(parse_csp(format_csp(csp)), csp)

    def test_format_layout(self):
        text = format_csp(toy_csp())
        self.assertEqual(
            text.splitlines(),
            ["csp arthur=1 merlin=x:3 arity=2", "scope r1 x ; table 100001", "scope x ; table 110"],
        )

    def test_errors(self):
        header = "csp arthur=1 merlin=x:3 arity=2\n"
        with self.assertRaisesRegex(FormatError, "line 2: unknown variable 'y'"):
            parse_csp(header + "scope r1 y ; table 1001\n")
        with self.assertRaisesRegex(FormatError, "line 3: table needs 3 bits"):
            parse_csp(header + "# comment\nscope x ; table 10\n")
        with self.assertRaisesRegex(FormatError, "line 1: expected header"):
            parse_csp("scope x ; table 101\n")
        with self.assertRaisesRegex(FormatError, "missing csp header"):
            parse_csp("# meta a=b\n")
        with self.assertRaisesRegex(FormatError, "hub 'r1' is not a merlin variable"):
            parse_csp("# meta hub=r1\n" + header)

    def test_read_and_write_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "toy.csp"
            write_csp(path, toy_csp())
            self.assertEqual(read_csp(path), toy_csp())


if __name__ == "__main__":
    unittest.main()
