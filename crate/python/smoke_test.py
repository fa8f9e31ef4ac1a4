"""Smoke test for the pymetaemb bindings.

Build and install the extension first:

    pip install --no-build-isolation ./crates/python
    python python/smoke_test.py
"""

import math
import random
import tempfile
from pathlib import Path

import pymetaemb as me


def random_table(name, words, dim, rng):
    return me.EmbeddingTable(name, words, [[rng.gauss(0.0, 1.0) for _ in range(dim)] for _ in words])


def main():
    rng = random.Random(0)
    words = [f"w{i:03d}" for i in range(40)]
    tables = [random_table("a", words, 8, rng), random_table("b", words[5:], 6, rng), random_table("c", words, 4, rng)]

    aligned = me.align(tables)
    assert len(aligned) == 35, len(aligned)
    assert aligned.dims == [8, 6, 4]
    assert aligned.normalized

    conc = me.build(aligned, "conc")
    assert conc.meta_dim == 18
    vec = conc.embed(aligned, "w010")
    assert len(vec) == 18
    assert math.isclose(sum(v * v for v in vec), 3.0, rel_tol=1e-9)

    caeme = me.build(aligned, "caeme", loss="scp", hidden=12, epochs=20, seed=1)
    assert caeme.meta_dim == 12
    assert len(caeme.loss_trace) == 20
    again = me.build(aligned, "caeme", loss="scp", hidden=12, epochs=20, seed=1)
    assert caeme.table(aligned).to_lists() == again.table(aligned).to_lists()

    tae_y = me.build(aligned, "tae+y", loss="mse", target=2, hidden=10, epochs=5)
    assert tae_y.meta_dim == 14

    pairs = [(words[i], words[i + 7], rng.random()) for i in range(5, 30)]
    dataset = me.SimilarityDataset("toy", pairs)
    score = me.evaluate(caeme.table(aligned), dataset)
    assert score["pairs_scored"] == 25
    assert -100.0 <= score["rho_scaled"] <= 100.0

    assert math.isclose(me.loss_value("scp", [1.0, 0.0], [-2.0, 0.0]), 4.0)
    assert math.isclose(me.spearman([1, 2, 3, 4], [10, 20, 30, 45]), 1.0)

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "caeme.json"
        caeme.save(path)
        restored = me.load_model(path)
        assert restored.embed(aligned, "w020") == caeme.embed(aligned, "w020")
        table_path = Path(tmp) / "meta.txt"
        caeme.table(aligned).export(table_path)
        loaded = me.load_table(table_path)
        assert loaded.dim == 12 and len(loaded) == 35

    try:
        me.build(aligned, "tae", loss="kl", target=9)
    except me.MetaembError as e:
        assert "target" in str(e)
    else:
        raise AssertionError("out-of-range target accepted")

    print(f"ok: {aligned!r}, {caeme!r}, rho={score['rho_scaled']:.2f}")


if __name__ == "__main__":
    main()
