import math
import tempfile
import unittest
from fractions import Fraction
from pathlib import Path

import numpy as np

from amcsp.circuits import truth_table, write_circuit
from amcsp.csp import Sampled, Verdict
from amcsp.errors import FormatError
from amcsp.expander import build_complete, build_margulis, walk_from_bits
from amcsp.generator import language_from_bitmap, language_from_predicate
from amcsp.hamming import int_to_bits, sphere_volume
from amcsp.protocol import (
    AmProtocol,
    amplify,
    check_completeness,
    choose_alpha,
    counting_bound,
    default_corpus,
    expander_repeat,
    format_corpus,
    measure_soundness,
    pad_challenge,
    parallel_repeat,
    pipeline_report,
    planted_protocol,
    read_corpus,
    secret_protocol,
    set_size_protocol,
    theorem1_pipeline,
    write_corpus,
)


class TestProtocolFamilies(unittest.TestCase):
    def test_secret_protocol(self):
        always = secret_protocol(3, 0)
        self.assertEqual((always.label, always.soundness_target), ("YES", 1))
        half = secret_protocol(3, 1, secret=1)
        self.assertEqual((half.l, half.n), (3, 1))
        self.assertEqual(half.label, "NO")
        self.assertEqual(measure_soundness(half), Fraction(1, 2))
        self.assertTrue(check_completeness(always))
        self.assertFalse(check_completeness(half))
        with self.assertRaisesRegex(ValueError, "fixed must lie"):
            secret_protocol(3, 4)

    def test_set_size_counts_covered_prefixes(self):
        # members 0b0001, 0b0011, 0b1000 cover prefixes 000, 001, 100
        language = language_from_bitmap(4, "5080")
        lower = set_size_protocol(language, 3)
        self.assertEqual(measure_soundness(lower), Fraction(3, 8))
        self.assertEqual(lower.soundness_target, Fraction(3, 8))
        upper = set_size_protocol(language, 3, upper=True)
        self.assertEqual(upper.label, "YES")
        self.assertEqual(set_size_protocol(language_from_predicate(4, "ALL"), 4).label, "YES")
        with self.assertRaisesRegex(ValueError, "l must lie"):
            set_size_protocol(language, 5)

    def test_planted_protocol(self):
        full = planted_protocol(3, 2, 8, seed=1)
        self.assertEqual(full.label, "YES")
        quarter = planted_protocol(3, 2, 2, seed=1)
        self.assertEqual(measure_soundness(quarter), Fraction(1, 4))
        self.assertEqual(int(truth_table(quarter.circuit).sum()), 2)
        with self.assertRaisesRegex(ValueError, "satisfiable must lie"):
            planted_protocol(3, 2, 9, seed=1)

    def test_label_must_be_yes_or_no(self):
        with self.assertRaisesRegex(ValueError, "label must be one of"):
            AmProtocol(name="x", circuit=secret_protocol(2, 0).circuit, label="MAYBE")

    def test_sampled_soundness(self):
        half = secret_protocol(4, 1, secret=0)
        estimate = measure_soundness(half, Sampled(trials=4000, seed=2))
        self.assertAlmostEqual(estimate, 0.5, delta=4 * math.sqrt(0.25 / 4000))
        self.assertEqual(estimate, measure_soundness(half, Sampled(trials=4000, seed=2)))
        with self.assertRaisesRegex(ValueError, "trials must be positive"):
            measure_soundness(half, Sampled(trials=0, seed=2))

    def test_default_corpus(self):
        corpus = default_corpus()
        self.assertEqual({p.label for p in corpus}, {"YES", "NO"})
        self.assertEqual(len({p.name for p in corpus}), len(corpus))
        self.assertTrue(all(p.l <= 4 for p in corpus))
        for p in corpus:
            self.assertEqual(p.label == "YES", measure_soundness(p) == 1, msg=p.name)


class TestAmplification(unittest.TestCase):
    def test_parallel_repetition_multiplies_soundness(self):
        half = secret_protocol(3, 1, secret=1)
        repeated = parallel_repeat(half, 3)
        self.assertEqual((repeated.l, repeated.n), (9, 3))
        self.assertEqual(measure_soundness(repeated), Fraction(1, 8))
        self.assertEqual(repeated.soundness_target, Fraction(1, 8))
        self.assertEqual(repeated.provenance["amplifier"], "parallel")
        self.assertFalse(repeated.experimental)
        self.assertIs(parallel_repeat(half, 1), half)
        with self.assertRaisesRegex(ValueError, "t must be positive"):
            parallel_repeat(half, 0)

    def test_expander_repetition_runs_the_verifier_on_walk_vertices(self):
        quarter = secret_protocol(4, 2, secret=2)
        g = build_margulis(4)
        repeated = expander_repeat(quarter, g, 3)
        self.assertEqual(repeated.l, 4 + 2 * 3)
        self.assertTrue(repeated.experimental)
        self.assertIsNone(repeated.soundness_target)
        good = 0
        for value in range(1 << repeated.l):
            walk = walk_from_bits(g, int_to_bits(value, repeated.l)).vertices
            good += all(v >> 2 == 2 for v in walk)
        self.assertEqual(measure_soundness(repeated), Fraction(good, 1 << repeated.l))

    def test_expander_repetition_needs_matching_vertex_count(self):
        with self.assertRaisesRegex(ValueError, "does not embed"):
            expander_repeat(secret_protocol(3, 1), build_margulis(4), 2)

    def test_amplify_dispatch(self):
        half = secret_protocol(3, 1, secret=1)
        self.assertEqual(amplify(half, 2).l, 6)
        self.assertEqual(amplify(half, 2, "expander", graph=build_complete(8, self_loops=True)).l, 3 + 3)
        with self.assertRaisesRegex(ValueError, "unknown amplifier"):
            amplify(half, 2, "sequential")

    def test_pad_challenge(self):
        half = secret_protocol(3, 1, secret=1)
        padded = pad_challenge(half, 5)
        self.assertEqual(padded.l, 5)
        self.assertEqual(measure_soundness(padded), Fraction(1, 2))
        self.assertEqual(padded.provenance["padded_from"], "3")
        self.assertIs(pad_challenge(half, 3), half)
        with self.assertRaisesRegex(ValueError, "cannot pad"):
            pad_challenge(half, 2)


class TestCorpusFile(unittest.TestCase):
    def test_round_trip(self):
        corpus = default_corpus(seed=3)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "corpus.txt"
            write_corpus(path, corpus)
            back = read_corpus(path)
        self.assertEqual([(p.name, p.label, p.l, p.n) for p in back], [(p.name, p.label, p.l, p.n) for p in corpus])
        for original, loaded in zip(corpus, back):
            np.testing.assert_array_equal(truth_table(loaded.circuit), truth_table(original.circuit))

    def test_unlabelled_protocol_cannot_be_listed(self):
        p = AmProtocol(name="bare", circuit=secret_protocol(2, 0).circuit)
        with self.assertRaisesRegex(ValueError, "no YES/NO label"):
            format_corpus([(p, "bare.circuit")])

    def test_errors(self):
        cases = [
            ("a a.circuit YES 2\n", "line 1: expected"),
            ("a a.circuit MAYBE 2 1\n", "label must be YES or NO"),
            ("a a.circuit YES 2 1\na a.circuit NO 2 1\n", "line 2: duplicate instance id"),
            ("a a.circuit YES two 1\n", "must be integers"),
            ("# header\na a.circuit YES 3 1\n", "line 2: circuit a.circuit has l=2 N=1"),
        ]
        with tempfile.TemporaryDirectory() as tmp:
            write_circuit(Path(tmp) / "a.circuit", secret_protocol(2, 1).circuit)
            path = Path(tmp) / "corpus.txt"
            for text, message in cases:
                path.write_text(text, encoding="utf-8")
                with self.assertRaisesRegex(FormatError, message):
                    read_corpus(path)


class TestPipeline(unittest.TestCase):
    def test_choose_alpha(self):
        self.assertEqual(choose_alpha(math.inf), 0)
        self.assertEqual(choose_alpha(0), Fraction(1, 2))
        self.assertEqual(choose_alpha(2), Fraction(7, 64))
        self.assertEqual(choose_alpha(3), Fraction(3, 64))

    def test_counting_bound(self):
        self.assertEqual(counting_bound(10, 1, 0), 0.0)
        self.assertEqual(counting_bound(10, 1, math.inf), 1.0)
        self.assertEqual(counting_bound(10, 1, 2), 11 / 32)
        self.assertEqual(counting_bound(4, 2, 1), 11 / 16)

    def test_counting_bound_over_d_matches_volume_times_soundness(self):
        """V_{l,k} * 2^{-l/D} with D = l / log2(1/s) gives back V_{l,k} * s."""
        for l, k, s in ((7, 1, Fraction(1, 3)), (9, 2, Fraction(5, 7)), (6, 0, Fraction(1, 4))):
            d = l / math.log2(1 / s)
            self.assertAlmostEqual(counting_bound(l, k, d), min(1.0, sphere_volume(l, k) * float(s)), places=12)

    def test_yes_instance(self):
        always = secret_protocol(3, 0, name="always")
        out = theorem1_pipeline(always, 1, "rs")
        self.assertEqual(out.provenance["protocol"], "always")
        report = pipeline_report(always, out)
        self.assertEqual(report.verdict, Verdict.YES)
        self.assertEqual(report.frac_full, 1.0)
        self.assertTrue(report.holds)
        self.assertEqual(report.d_meas, math.inf)
        self.assertEqual((report.alpha, report.k), (0, 0))

    def test_no_instance_after_parallel_repetition(self):
        half = secret_protocol(3, 1, secret=1, name="half")
        out = theorem1_pipeline(half, 2, "rs")
        report = pipeline_report(half, out)
        self.assertEqual((report.l_base, report.l, report.t), (3, 6, 2))
        self.assertEqual(report.soundness, Fraction(1, 2))
        self.assertEqual(report.amplified_soundness, Fraction(1, 4))
        self.assertAlmostEqual(report.d_meas, 3.0)
        self.assertEqual((report.alpha, report.k), (Fraction(3, 64), 0))
        self.assertEqual(report.bound, 0.25)
        self.assertEqual(report.bound, counting_bound(report.l, report.k, report.d_meas))
        self.assertEqual(report.frac_above, 0.25)
        self.assertTrue(report.holds)
        self.assertNotEqual(report.verdict, Verdict.YES)

    def test_expander_pipeline_is_marked_experimental(self):
        half = secret_protocol(3, 1, secret=1, name="half")
        out = theorem1_pipeline(half, 2, "rs", amplifier="expander", graph=build_complete(8, self_loops=True))
        self.assertEqual(out.provenance["experimental"], "true")
        report = pipeline_report(half, out)
        self.assertEqual(report.amplifier, "expander")
        self.assertEqual(report.amplified_soundness, Fraction(1, 4))
        self.assertTrue(report.holds)

    def test_padding_the_challenge(self):
        out = theorem1_pipeline(secret_protocol(2, 0), 1, "rs", pad_to=4)
        self.assertEqual(out.l, 4)
        self.assertEqual(out.provenance["experimental"], "false")


if __name__ == "__main__":
    unittest.main()
