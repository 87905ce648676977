import math
import unittest
from fractions import Fraction

import numpy as np
from scipy import stats

from amcsp.hamming import (
    INFINITE,
    BallSampler,
    all_bit_rows,
    as_bits,
    ball_members,
    bits_to_int,
    distances_to_set,
    entropy,
    entropy_volume_bound,
    format_bits,
    hamming_distance,
    int_to_bits,
    ints_to_rows,
    rows_to_ints,
    sample_ball,
    set_distance,
    sphere_volume,
    xor_bits,
)


class TestBits(unittest.TestCase):
    def test_int_round_trip_is_msb_first(self):
        self.assertEqual(int_to_bits(6, 4), (0, 1, 1, 0))
        self.assertEqual(bits_to_int((0, 1, 1, 0)), 6)

    def test_int_to_bits_rejects_overflow(self):
        with self.assertRaisesRegex(ValueError, "does not fit"):
            int_to_bits(16, 4)

    def test_as_bits_parses_strings(self):
        self.assertEqual(as_bits("0110"), (0, 1, 1, 0))
        self.assertEqual(format_bits((1, 0, 1)), "101")
        with self.assertRaisesRegex(ValueError, "not a bit-string"):
            as_bits("012")

    def test_rows_and_ints_agree(self):
        rows = all_bit_rows(5)
        self.assertEqual(rows.shape, (32, 5))
        np.testing.assert_array_equal(rows_to_ints(rows), np.arange(32))
        np.testing.assert_array_equal(ints_to_rows(np.arange(32), 5), rows)

    def test_zero_width_rows(self):
        self.assertEqual(all_bit_rows(0).shape, (1, 0))
        np.testing.assert_array_equal(rows_to_ints(np.zeros((3, 0), dtype=np.uint8)), [0, 0, 0])

    def test_xor_is_an_involution(self):
        x, y = (1, 0, 1, 1), (0, 1, 1, 0)
        self.assertEqual(xor_bits(xor_bits(x, y), y), x)


class TestDistances(unittest.TestCase):
    def test_hamming_distance(self):
        self.assertEqual(hamming_distance((0, 0, 0), (1, 0, 1)), 2)
        with self.assertRaisesRegex(ValueError, "length mismatch"):
            hamming_distance((0,), (0, 1))

    def test_set_distance_of_empty_set_is_infinite(self):
        self.assertEqual(set_distance((0, 1), []), INFINITE)

    def test_set_distance_takes_the_minimum(self):
        self.assertEqual(set_distance((0, 0, 0), [(1, 1, 1), (0, 1, 0)]), 1)

    def test_vectorized_distances_match_scalar(self):
        members = np.array([0b0011, 0b1100])
        got = distances_to_set(np.arange(16), members)
        for x in range(16):
            expected = set_distance(int_to_bits(x, 4), [int_to_bits(int(m), 4) for m in members])
            self.assertEqual(got[x], expected)

    def test_vectorized_distance_to_empty_set(self):
        np.testing.assert_array_equal(distances_to_set(np.arange(3), np.array([], dtype=np.int64)), [-1, -1, -1])


class TestEntropyAndVolumes(unittest.TestCase):
    def test_entropy_endpoints_and_midpoint(self):
        self.assertEqual(entropy(0), 0.0)
        self.assertEqual(entropy(1), 0.0)
        self.assertAlmostEqual(entropy(Fraction(1, 2)), 1.0)

    def test_entropy_rejects_out_of_range(self):
        with self.assertRaisesRegex(ValueError, "must lie in"):
            entropy(1.5)

    def test_sphere_volume_small_cases(self):
        self.assertEqual(sphere_volume(4, 0), 1)
        self.assertEqual(sphere_volume(4, 1), 5)
        self.assertEqual(sphere_volume(4, 4), 16)

    def test_volume_bounded_by_entropy_up_to_thirty(self):
        """V_{n,k} <= 2^{H(k/n) n} for every n <= 30 and k <= n/2."""
        for n in range(1, 31):
            for k in range(0, n // 2 + 1):
                self.assertLessEqual(sphere_volume(n, k), entropy_volume_bound(n, k), msg=f"n={n} k={k}")

    def test_ball_members_counts_and_order(self):
        members = list(ball_members(5, 2))
        self.assertEqual(len(members), sphere_volume(5, 2))
        self.assertEqual(members, sorted(members))
        self.assertTrue(all(sum(m) <= 2 for m in members))


class TestBallSampler(unittest.TestCase):
    def test_samples_stay_in_the_ball(self):
        sampler = BallSampler(8, 3, seed=7)
        for _ in range(200):
            self.assertLessEqual(sum(sampler.sample()), 3)

    def test_volume_matches_sphere_volume(self):
        self.assertEqual(BallSampler(10, 4, seed=0).volume, sphere_volume(10, 4))

    def test_same_seed_same_stream(self):
        a, b = BallSampler(6, 2, seed=11), BallSampler(6, 2, seed=11)
        self.assertEqual([a.sample() for _ in range(50)], [sample_ball(b) for _ in range(50)])

    def test_uniform_over_the_ball(self):
        sampler = BallSampler(4, 2, seed=3)
        members = list(ball_members(4, 2))
        index = {m: i for i, m in enumerate(members)}
        draws = 200 * len(members)
        counts = np.zeros(len(members))
        for _ in range(draws):
            counts[index[sampler.sample()]] += 1
        self.assertGreater(stats.chisquare(counts).pvalue, 1e-4)

    def test_radius_zero_always_returns_zero(self):
        sampler = BallSampler(5, 0, seed=1)
        self.assertEqual(sampler.sample(), (0,) * 5)

    def test_rejects_bad_arguments(self):
        with self.assertRaisesRegex(ValueError, "radius must lie"):
            BallSampler(3, 4, seed=0)
        with self.assertRaisesRegex(ValueError, "64-bit"):
            BallSampler(3, 1, seed=-1)

    def test_huge_ball_sampling(self):
        sampler = BallSampler(200, 100, seed=5)
        self.assertTrue(math.isfinite(float(sampler.volume)))
        self.assertLessEqual(sum(sampler.sample()), 100)


if __name__ == "__main__":
    unittest.main()
