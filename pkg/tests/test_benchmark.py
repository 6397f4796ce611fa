import importlib.util
from pathlib import Path


def test_benchmark_runs_and_engines_match(capsys):
    path = Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    assert mod.main(["--n", "50", "--T", "0.05", "--walker-T", "0.5", "--repeat", "1"]) == 0
    rows = capsys.readouterr().out.splitlines()[1:]
    assert len(rows) == 3 and all(r.endswith("True") for r in rows)
