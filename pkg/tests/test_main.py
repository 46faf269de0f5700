"""Test cases for the command-line interface."""
import contextlib
import io
import json
import sys
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from warpspmv.__main__ import main

BAND = "synthetic:uniform_band:nrows=8,width=3"


def _run(*args: str) -> str:
    """Run main() with arguments and return its stdout."""
    with mock.patch.object(sys, "argv", ["warp-spmv", *args]):
        with contextlib.redirect_stdout(io.StringIO()) as stdout:
            main()

    return stdout.getvalue()


class MainTestCase(unittest.TestCase):
    """Smoke tests of the subcommands."""

    def test_dump_layout(self):
        """One line per warp with aligned offsets."""
        self.assertEqual(
            _run("dump-layout", BAND, "--warp-size", "4").splitlines(),
            [
                "warp=0 offset=0 maxrows=3 reduction=1 rows=0..3",
                "warp=1 offset=32 maxrows=3 reduction=1 rows=4..7",
            ],
        )

    def test_stats(self):
        """Stats rows on stdout, three report files on disk."""
        with tempfile.TemporaryDirectory() as temp_dir:
            output = _run("stats", BAND, "--out-dir", temp_dir)
            names = sorted(path.name for path in Path(temp_dir).iterdir())

        row = json.loads(output.splitlines()[0])
        self.assertEqual(row["nnz"], 24)
        self.assertEqual(row["minrow"], 3)
        self.assertEqual(names, ["histogram.csv", "padding.csv", "stats.csv"])

    def test_cg(self):
        """CG through a renumbered kernel converges to ones."""
        output = _run(
            "cg", "synthetic:laplacian3d:nx=3,ny=3,nz=3", "--kernel", "k1rs"
        )
        result = json.loads(output)
        self.assertTrue(result["converged"])
        self.assertLess(result["max_error"], 1e-6)

    def test_bench_iteration_presets(self):
        """Only the protocol's iteration counts are accepted."""
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit):
                _run("bench", BAND, "--iterations", "7")
