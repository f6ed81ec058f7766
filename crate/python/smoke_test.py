"""Smoke test for the pyrealexp extension.

Either install the module (pip install -e crates/python --no-build-isolation)
or build it with cargo (cargo build -p pyrealexp --features extension-module)
and run:  python3 python/smoke_test.py [path/to/libpyrealexp.so]
"""

import importlib.machinery
import importlib.util
import json
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "crates" / "core" / "tests" / "fixtures"


def load_module(explicit=None):
    if explicit is None:
        try:
            import pyrealexp

            return pyrealexp
        except ImportError:
            pass
    candidates = [Path(explicit)] if explicit else [
        ROOT / "target" / "release" / "libpyrealexp.so",
        ROOT / "target" / "debug" / "libpyrealexp.so",
    ]
    for path in candidates:
        if path.exists():
            loader = importlib.machinery.ExtensionFileLoader("pyrealexp", str(path))
            spec = importlib.util.spec_from_file_location("pyrealexp", path, loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            return module
    sys.exit(f"no built extension found in {[str(c) for c in candidates]}")


def close(a, b, tol=1e-12):
    return all(abs(x - y) <= tol for x, y in zip(a, b))


def main():
    rx = load_module(sys.argv[1] if len(sys.argv) > 1 else None)

    game = rx.TableGame.weighted_majority([3.0, 2.0, 1.0], 4.0)
    assert game.n == 3
    assert game.value([0, 2]) == 1.0 and game.value([1, 2]) == 0.0
    exact = rx.exact_shapley(game)
    assert close(exact.phi, [2 / 3, 1 / 6, 1 / 6]), exact
    assert close(rx.permutation_shapley(game).phi, exact.phi)
    sampled = rx.permutation_shapley(game, samples=500, seed=3)
    assert len(sampled.std_error) == 3

    s = [[1.0, 0.5, 0.0], [0.5, 1.0, 0.25], [0.0, 0.25, 1.0]]
    decoupled = rx.realexp_decoupled(game, s)
    assert close(decoupled.phi, [1.0, 0.4, 4 / 7]), decoupled
    assert decoupled.ranking() == [0, 2, 1]

    masks = rx.generate_masks(10, 50, 0.3, "fixed_count", seed=1)
    assert len(masks) == 50 and all(m.count(False) == 3 for m in masks)

    assert rx.kendall_tau([1, 3, 5, 7, 9], [3, 1, 7, 5, 2]) == (4, 0.8, 1 / 3)
    assert rx.jaccard_stability([[1, 2, 3], [2, 3, 4]]) == 0.5
    assert rx.r_squared([1.0, 2.0, 3.0], [1.0, 2.0, 4.0]) == 0.5

    config = rx.RunConfig.load(str(FIXTURES / "generic_run.json"))
    report = rx.explain(config)
    assert report.n == 10 and sorted(report.ranking) == list(range(10))
    assert report.heldout_r2 > 0.5
    again = rx.explain(config)
    assert report.canonical_json() == again.canonical_json()
    assert rx.ImportanceReport.from_json(report.to_json()).ranking == report.ranking
    matched, accuracy, tau = report.consistency([0, 1, 2])
    assert 0 <= matched <= 3 and -1.0 <= tau <= 1.0

    bad = json.loads(config.to_json())
    bad["alpha"] = 1.5
    try:
        rx.explain(rx.RunConfig.from_json(json.dumps(bad)))
    except ValueError as e:
        assert "alpha" in str(e) or "ratio" in str(e), e
    else:
        raise AssertionError("invalid alpha accepted")

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "game.json"
        path.write_text(game.to_json())
        assert close(rx.exact_shapley(rx.TableGame.load(str(path))).phi, exact.phi)

    print("smoke test passed:", report.attribution)


if __name__ == "__main__":
    main()
