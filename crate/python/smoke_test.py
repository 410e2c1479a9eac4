"""Smoke test for the darkit Python extension.

Build and install first:
    maturin build -m crates/py/Cargo.toml -o dist && pip install dist/darkit-*.whl
"""

import json
import pathlib
import tempfile

import darkit

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "crates" / "core" / "fixtures"


def main():
    source = (FIXTURES / "tiny_spike_gpt.sd").read_text()
    tree = darkit.extract(source)
    assert len(tree["nodes"]) == 11, tree
    assert darkit.module_code(source, "blocks.0.lif") == "        self.lif = LIF(1.0, 0.9)\n"

    ok = darkit.check_patch(source, "blocks.0.lif", "        self.lif = LIF(0.5, 0.9)\n")
    assert ok["ok"], ok
    bad = darkit.check_patch(source, "blocks.0.lif", "        self.lif = LIF(0.5)\n")
    assert not bad["ok"]

    graph = json.loads((FIXTURES / "tiny_flow.flow.json").read_text())
    assert darkit.compile_flow(graph) == (FIXTURES / "tiny_flow.sd").read_text()

    try:
        darkit.extract("class Broken(Module)\n")
    except darkit.DarkitError as e:
        assert str(e).startswith("["), e
    else:
        raise AssertionError("broken source was accepted")

    with tempfile.TemporaryDirectory() as data:
        wb = darkit.Workbench(data)
        assert len(wb.registry()) == 10
        assert len(wb.registry("model")) == 1
        outcome = wb.apply_patch("tiny-spike-gpt", "blocks.1.lif", "        self.lif = LIF(0.5, 0.9)\n")
        assert outcome["version"] == 2
        assert wb.model_tree("tiny-spike-gpt")["version"] == 2

        request = {
            "model": "tiny-spike-gpt",
            "dataset": "wikitext",
            "tokenizer": "gpt2-small",
            "values": {"steps": 20},
        }
        assert wb.render_command(request).startswith("darkit train tiny-spike-gpt")
        grid = wb.expand_grid({"base": request, "axes": [{"param": "batch_size", "values": [8, 16, 32]}]})
        assert len(grid) == 3

        a = wb.simulate("tiny-spike-gpt", 100, seed=1)
        b = wb.simulate("tiny-spike-gpt", 100, seed=2, noise=0.05)
        series = wb.series(a, "loss")
        assert len(series) == 100 and series[0] == (0, 4.5)
        assert len(wb.series(a, "loss", max_points=10)) == 10
        chart = wb.compare([a, b], "loss")
        assert [r["id"] for r in chart["runs"]] == [a, b]
        assert wb.export(a, "csv").startswith("step,name,value,ts")
        assert len(wb.runs("tiny-spike-gpt")) == 2

    print("python smoke test passed")


if __name__ == "__main__":
    main()
