import io
import json
import os
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path
from unittest import mock

from specloc import main
from specloc_core.config import get_settings
from specloc_core.graph_nodes import parse_number, parse_reals
from specloc_core.errors import ArgumentError
from specloc_core.orchestrator import run_command
from specloc_core.tables import frame_to_eigen, frame_to_qes, parse_table

HARMONIC = ["--family", "custom", "--potential", "z^2", "--rays", "0,pi"]


def invoke(argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


class SuccessfulRunTests(unittest.TestCase):
    def test_harmonic_eigenvalues(self):
        code, out, _ = invoke(["eig", *HARMONIC, "--range", "0,8"])
        self.assertEqual(code, 0)
        self.assertTrue(out.startswith("# specloc eig --family custom"))
        records = frame_to_eigen(parse_table(out))
        self.assertEqual(len(records), 4)
        for rec, want in zip(records, (1.0, 3.0, 5.0, 7.0)):
            self.assertLess(abs(rec.lam - want), 1e-6)
            self.assertEqual(rec.method, "real-scan")

    def test_zero_counts(self):
        code, out, _ = invoke(["eig", *HARMONIC, "--range", "0,4", "--zeros"])
        self.assertEqual(code, 0)
        records = frame_to_eigen(parse_table(out))
        self.assertEqual([r.n_real_zeros for r in records], [0, 1])
        self.assertEqual([r.n_nonreal_zeros for r in records], [0, 0])

    def test_qes_points(self):
        code, out, _ = invoke(["qes", "--n", "1", "--b", "1"])
        self.assertEqual(code, 0)
        self.assertIn("# Q_2(lambda) at b=1", out)
        df = parse_table(out)
        self.assertEqual(list(df["C_match"]), [1, 1])
        points = frame_to_qes(df)
        self.assertLess(abs(points[0].lam + 3.0), 1e-10)
        self.assertLess(abs(points[1].lam - 1.0), 1e-10)

    def test_json_output(self):
        code, out, _ = invoke(["qes", "--n", "0", "--b", "2", "--format", "json"])
        self.assertEqual(code, 0)
        body = json.loads("\n".join(line for line in out.splitlines() if not line.startswith("#")))
        self.assertEqual(body["columns"][:4], ["n", "b", "lambda_re", "lambda_im"])
        self.assertAlmostEqual(body["rows"][0]["lambda_re"], -4.0, places=12)

    def test_sectors_of_a_degree(self):
        code, out, _ = invoke(["sectors", "--d", "3"])
        self.assertEqual(code, 0)
        self.assertEqual(len(parse_table(out)), 5)

    def test_determinant(self):
        code, out, _ = invoke(["det", *HARMONIC, "--mu", "1"])
        self.assertEqual(code, 0)
        row = parse_table(out).iloc[0]
        self.assertLess(abs(complex(row["F_re"], row["F_im"])), 1e-7)

    def test_bethe(self):
        code, out, _ = invoke(["bethe", "--n", "1", "--b", "1", "--branch", "1"])
        self.assertEqual(code, 0)
        df = parse_table(out)
        self.assertLess(abs(df["z_re"][0] + 1.0), 1e-10)

    def test_repeated_runs_are_identical(self):
        argv = ["qes", "--n", "2", "--b", "0.7"]
        self.assertEqual(invoke(argv)[1], invoke(argv)[1])

    def test_output_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            target = Path(tmp) / "nested" / "qes.csv"
            code, out, _ = invoke(["qes", "--n", "1", "--b", "1", "--out", str(target)])
            self.assertEqual(code, 0)
            self.assertEqual(out, "")
            self.assertTrue(target.read_text(encoding="utf-8").startswith("# specloc qes"))

    def test_environment_tolerance_in_header(self):
        with mock.patch.dict(os.environ, {"SPECLOC_RTOL": "1e-9"}):
            get_settings.cache_clear()
            code, out, _ = invoke(["qes", "--n", "0", "--b", "1"])
        self.assertEqual(code, 0)
        self.assertIn("rtol=1e-09", out.splitlines()[0])


class FailureTests(unittest.TestCase):
    def test_missing_range(self):
        code, out, err = invoke(["eig", "--family", "cubic-pt", "--a", "1"])
        self.assertEqual(code, 1)
        self.assertEqual(out, "")
        self.assertTrue(err.startswith("error=ArgumentError module=specloc message=eig needs --range or --box"))

    def test_unknown_family(self):
        code, _, err = invoke(["eig", "--family", "sextic", "--range", "0,1"])
        self.assertEqual(code, 1)
        self.assertIn("error=ArgumentError", err)

    def test_missing_parameter(self):
        code, _, err = invoke(["eig", "--family", "quartic-ii", "--b", "1", "--range", "0,1"])
        self.assertEqual(code, 1)
        self.assertIn("error=InvalidParams module=oscillator", err)

    def test_rtol_out_of_range(self):
        code, _, err = invoke(["qes", "--n", "1", "--b", "1", "--rtol", "0.1"])
        self.assertEqual(code, 1)
        self.assertIn("module=config", err)

    def test_bad_environment(self):
        with mock.patch.dict(os.environ, {"SPECLOC_EIG_TOL": "tight"}):
            get_settings.cache_clear()
            code, _, err = invoke(["qes", "--n", "1", "--b", "1"])
        self.assertEqual(code, 1)
        self.assertIn("error=ConfigError", err)

    def test_empty_interval(self):
        code, _, _ = invoke(["eig", *HARMONIC, "--range", "3,1"])
        self.assertEqual(code, 1)

    def test_numerical_failure(self):
        # both QES eigenvalues of L_2 merge at b = 0
        code, out, err = invoke(["darboux", "--n", "1", "--b", "0"])
        self.assertEqual(code, 2)
        self.assertEqual(out, "")
        self.assertIn("error=DegenerateEigenvalue module=qes", err)

    def test_debug_state_carries_the_error(self):
        exit_code, output, debug_state = run_command({"command": "det", "family": "cubic-pt", "a": 1.0})
        self.assertEqual(exit_code, 1)
        self.assertIsNone(output)
        self.assertIn("det needs --mu", debug_state["error"])
        self.assertIsNotNone(debug_state["problem"])


class FlagParsingTests(unittest.TestCase):
    def test_numbers(self):
        self.assertEqual(parse_number("2+3i"), 2 + 3j)
        self.assertAlmostEqual(parse_number("-pi/2").real, -1.5707963267948966)
        self.assertEqual(parse_number("1e-3"), 0.001)
        with self.assertRaises(ArgumentError):
            parse_number("two")

    def test_reals(self):
        self.assertEqual(parse_reals("-6, 8", 2, "--range"), (-6.0, 8.0))
        self.assertIsNone(parse_reals(None, 2, "--range"))
        with self.assertRaises(ArgumentError):
            parse_reals("1,2,3", 2, "--range")
        with self.assertRaises(ArgumentError):
            parse_reals("1,2i", 2, "--range")
