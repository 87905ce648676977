import io
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from amcsp.circuits import CircuitBuilder, write_circuit
from amcsp.csp import read_csp
from amcsp.main import EXIT_INVALID, EXIT_LIMIT, EXIT_OK, main
from amcsp.reports import data_section, parse_summary

SMALL_CONFIG = """\
seed = 5
trials = 2000
walk_graph_m = 4
walk_epsilons = [0.5]
walk_lengths = [8]
concentrate_block_len = 4
concentrate_k = 8
concentrate_families = ["zero", "rotation"]
conditional_samples = 2
amplify_ts = [2]
pipeline_t = 1
guess_k = 8
guess_alpha = "1/2"
guess_accepted = [0, 1]
guess_target = [0, 1, 2]
"""


class CliTestCase(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.tmp = Path(self._tmp.name)
        self.config = self.tmp / "config.toml"
        self.config.write_text(SMALL_CONFIG, encoding="utf-8")
        self.out = self.tmp / "reports"

    def run_cli(self, *args: str, out: Path | None = None) -> tuple[int, dict[str, str]]:
        argv = ["--config", str(self.config), *args, "--out", str(out or self.out)]
        with patch("sys.stdout", new_callable=io.StringIO) as stdout:
            code = main(argv)
        return code, parse_summary(stdout.getvalue())

    def and_circuit(self) -> Path:
        builder = CircuitBuilder(1, 1)
        path = self.tmp / "and.circuit"
        write_circuit(path, builder.build(builder.and_(builder.r(0), builder.w(0))))
        return path


class TestReduceAndGameValue(CliTestCase):
    def test_reduce_writes_a_csp(self):
        code, summary = self.run_cli("reduce", str(self.and_circuit()))
        self.assertEqual(code, EXIT_OK)
        self.assertEqual((summary["l"], summary["N_prime"], summary["m"]), ("1", "24", "48"))
        psi = read_csp(self.out / "and.csp")
        self.assertEqual(psi.m, 48)
        self.assertEqual(psi.meta["fast_path"], "hub")

    def test_gamevalue_classifies_the_toy_csp(self):
        self.run_cli("reduce", str(self.and_circuit()))
        code, summary = self.run_cli("gamevalue", str(self.out / "and.csp"))
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(summary["verdict"], "NO")
        self.assertEqual(summary["frac_full"], "0.5")
        self.assertEqual(summary["min_value"], "1/2")
        table = (self.out / "gamevalue.csv").read_text(encoding="utf-8")
        self.assertEqual(data_section(table), "r,max_val\n0,1/2\n1,1\n")

    def test_merlin_limit_exits_with_limit_code(self):
        path = self.tmp / "flat.csp"
        path.write_text("csp arthur=1 merlin=x:3,y:3 arity=2\nscope r1 x ; table 100001\nscope x y ; table 100010001\n", encoding="utf-8")
        self.config.write_text(SMALL_CONFIG + "limit_merlin = 2\n", encoding="utf-8")
        code, _ = self.run_cli("gamevalue", str(path))
        self.assertEqual(code, EXIT_LIMIT)

    def test_spectral_limit_exits_with_limit_code(self):
        self.config.write_text(SMALL_CONFIG + "limit_spectral = 8\n", encoding="utf-8")
        code, _ = self.run_cli("walk")
        self.assertEqual(code, EXIT_LIMIT)


class TestExperiments(CliTestCase):
    def test_walk(self):
        code, summary = self.run_cli("walk")
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(summary["graph"], "margulis(m=4)")
        self.assertEqual((summary["connected"], summary["bipartite"]), ("true", "false"))
        self.assertEqual(summary["points"], "1")
        self.assertEqual(summary["within_all"], "true")

    def test_walk_with_zero_trials_has_no_rows(self):
        code, summary = self.run_cli("walk", "--trials", "0")
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(summary["points"], "0")
        self.assertEqual(data_section((self.out / "walk.csv").read_text(encoding="utf-8")).count("\n"), 1)

    def test_concentrate_is_reproducible(self):
        """Same config and seed give byte-identical data sections."""
        first, second = self.tmp / "a", self.tmp / "b"
        self.assertEqual(self.run_cli("concentrate", out=first)[0], EXIT_OK)
        self.assertEqual(self.run_cli("concentrate", out=second)[0], EXIT_OK)
        a = data_section((first / "concentrate.csv").read_text(encoding="utf-8"))
        b = data_section((second / "concentrate.csv").read_text(encoding="utf-8"))
        self.assertEqual(a, b)
        # header, zero family, rotation family plus two fixed r_b rows
        self.assertEqual(len(a.splitlines()), 1 + 1 + 3)

    def test_guess(self):
        code, summary = self.run_cli("guess")
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(summary["k"], "8")
        self.assertEqual(summary["within_all"], "true")

    def test_amplify_reports_only_no_instances(self):
        code, summary = self.run_cli("amplify")
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(summary["expander_repeat"], "experimental")
        table = data_section((self.out / "amplify.csv").read_text(encoding="utf-8"))
        self.assertNotIn("always", table)
        self.assertIn("secret-half,2,1/2,6,1/4", table)

    def test_pipeline_on_the_builtin_corpus(self):
        code, summary = self.run_cli("pipeline")
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(summary["verdict.always"], "YES")
        self.assertEqual(summary["verdict.setsize-full"], "YES")
        self.assertEqual(summary["holds_all"], "true")


class TestExitCodes(CliTestCase):
    def test_invalid_config(self):
        self.config.write_text("trials = -1\n", encoding="utf-8")
        code, _ = self.run_cli("walk")
        self.assertEqual(code, EXIT_INVALID)

    def test_invalid_override(self):
        code, _ = self.run_cli("walk", "--workers", "0")
        self.assertEqual(code, EXIT_INVALID)

    def test_gamevalue_rejects_threshold_of_one(self):
        self.run_cli("reduce", str(self.and_circuit()))
        code, _ = self.run_cli("gamevalue", str(self.out / "and.csp"), "--s", "1")
        self.assertEqual(code, EXIT_INVALID)

    def test_missing_circuit_file(self):
        code, _ = self.run_cli("reduce", str(self.tmp / "missing.circuit"))
        self.assertEqual(code, EXIT_INVALID)

    def test_malformed_circuit_file(self):
        path = self.tmp / "bad.circuit"
        path.write_text("circuit l=1 N=1\ng1 = NAND r1 w1\noutput g1\n", encoding="utf-8")
        code, _ = self.run_cli("reduce", str(path))
        self.assertEqual(code, EXIT_INVALID)

    def test_version(self):
        with patch("sys.stdout", new_callable=io.StringIO) as stdout:
            with self.assertRaises(SystemExit) as ctx:
                main(["--version"])
        self.assertEqual(ctx.exception.code, 0)
        self.assertTrue(stdout.getvalue().startswith("amcsp "))


if __name__ == "__main__":
    unittest.main()
