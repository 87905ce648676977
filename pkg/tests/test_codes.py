import unittest

import galois
import numpy as np

from amcsp.codes import (
    C_CODE,
    FAIL,
    GF,
    CodeSpec,
    build_code,
    build_default_code,
    certify_min_distance,
    decode,
    encode,
    encode_batch,
    generator_matrix,
)
from amcsp.hamming import all_bit_rows


def _random_errors(rng, length, radius):
    weight = int(rng.integers(0, radius + 1))
    error = np.zeros(length, dtype=np.uint8)
    if weight:
        error[rng.choice(length, size=weight, replace=False)] = 1
    return error


class TestCodeSpec(unittest.TestCase):
    def test_default_code_is_reed_solomon(self):
        spec = build_default_code(12)
        self.assertEqual(spec.backend, "rs")
        self.assertEqual(spec.id, f"rs:12:{spec.n_prime}")
        self.assertLessEqual(spec.n_prime, C_CODE * spec.n)
        self.assertGreater(spec.eta, 0)

    def test_unknown_backend(self):
        with self.assertRaisesRegex(ValueError, "unknown code backend"):
            build_code("hadamard", 4)

    def test_validate_rejects_distance_below_radius(self):
        spec = CodeSpec(backend="rs", n=4, n_prime=8, eta=0.25, min_distance=3)
        with self.assertRaisesRegex(ValueError, "min_distance"):
            spec.validate()

    def test_identity_has_zero_radius(self):
        spec = build_code("identity", 5)
        self.assertEqual(spec.n_prime, 5)
        self.assertEqual(spec.radius, 0)


class TestEncodeDecode(unittest.TestCase):
    def test_length_checks(self):
        spec = build_default_code(8)
        with self.assertRaisesRegex(ValueError, "message length"):
            encode(spec, (0,) * 7)
        with self.assertRaisesRegex(ValueError, "word length"):
            decode(spec, (0,) * 7)

    def test_systematic_prefix(self):
        for backend in ("rs", "repetition", "identity"):
            spec = build_code(backend, 6)
            g = generator_matrix(spec)
            np.testing.assert_array_equal(g[:, :6], np.eye(6, dtype=np.uint8), err_msg=backend)

    def test_generator_matrix_matches_encode(self):
        spec = build_default_code(10)
        messages = all_bit_rows(10)[::37]
        batch = encode_batch(spec, messages)
        for row, codeword in zip(messages, batch):
            self.assertEqual(tuple(int(b) for b in codeword), encode(spec, row))

    def test_decode_corrects_every_pattern_within_radius(self):
        """10^4 random codewords with at most floor(eta N') flipped bits decode exactly."""
        rng = np.random.default_rng(2024)
        for backend, n, trials in (("rs", 8, 10_000), ("repetition", 6, 10_000), ("rs", 16, 1_000)):
            spec = build_code(backend, n)
            for _ in range(trials):
                w = rng.integers(0, 2, size=n)
                u = np.array(encode(spec, w), dtype=np.uint8) ^ _random_errors(rng, spec.n_prime, spec.radius)
                self.assertEqual(decode(spec, u), tuple(int(b) for b in w), msg=f"{backend} n={n}")

    def test_rs_decode_fails_outside_image(self):
        spec = build_default_code(5)
        # same RS code, but the message symbol has a nonzero padding bit
        word = encode(build_default_code(8), (0, 0, 0, 0, 0, 1, 0, 0))
        self.assertIs(decode(spec, word), FAIL)

    def test_fail_is_falsy_singleton(self):
        self.assertFalse(FAIL)
        self.assertEqual(repr(FAIL), "FAIL")


class TestReedSolomonField(unittest.TestCase):
    def test_field_uses_primitive_polynomial_0x11d(self):
        # x^8 = x^4 + x^3 + x^2 + 1
        self.assertEqual(int(GF(2) ** 8), 0x1D)
        self.assertEqual(GF.order, 256)

    def test_codeword_symbols_lie_on_one_low_degree_polynomial(self):
        spec = build_default_code(16)
        k, length = spec.params
        word = encode(spec, tuple(int(b) for b in format(0xBEEF, "016b")))
        symbols = [int("".join(map(str, word[i : i + 8])), 2) for i in range(0, len(word), 8)]
        f = galois.lagrange_poly(GF(np.arange(k)), GF(symbols[:k]))
        self.assertEqual(f(GF(np.arange(length))).tolist(), symbols)

    def test_symbol_errors_up_to_radius_are_corrected(self):
        spec = build_default_code(16)
        k, length = spec.params
        w = tuple(int(b) for b in format(0x1234, "016b"))
        word = list(encode(spec, w))
        # corrupt (length - k) // 2 whole symbols
        for s in range((length - k) // 2):
            for i in range(8):
                word[8 * (2 * s + 1) + i] ^= 1
        self.assertEqual(decode(spec, word), w)
        for i in range(8):
            word[8 * (length - 1) + i] ^= 1
        self.assertNotEqual(decode(spec, word), w)


class TestMinimumDistance(unittest.TestCase):
    def test_exhaustive_minimum_distance(self):
        self.assertEqual(certify_min_distance(build_code("identity", 4)), 1)
        self.assertEqual(certify_min_distance(build_code("repetition", 4)), 5)
        self.assertGreaterEqual(certify_min_distance(build_default_code(8)), 3)

    def test_design_value_beyond_limit(self):
        spec = build_default_code(16)
        self.assertEqual(certify_min_distance(spec, exhaustive_limit=8), spec.min_distance)


if __name__ == "__main__":
    unittest.main()
