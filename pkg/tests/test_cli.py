import csv
import math
import subprocess
import sys

import numpy as np
import pytest

from polymem import formats
from polymem.cli import main
from polymem.geometry import exact_membership


def _rows(path):
    with open(path) as f:
        return list(csv.DictReader(f))


@pytest.fixture
def body_file(tmp_path):
    p = tmp_path / "body.csv"
    assert main(["gen", "--family", "random-tangent", "--d", "2", "--params", "n=20",
                 "--seed", "4", "-o", str(p)]) == 0
    return p


def test_gen_writes_a_polytope(body_file):
    K = formats.read_polytope(body_file)
    assert K.dim == 2 and K.n == 20 + 4


def test_gen_hypercylinder_reports_shape(tmp_path, capsys):
    p = tmp_path / "cyl.csv"
    main(["gen", "--family", "hypercylinder", "--d", "3", "--params", "alpha=4", "eps=0.05",
          "delta=0.4", "-o", str(p)])
    err = capsys.readouterr().err
    assert "k=2" in err and "delta=0.4" in err


def test_bad_params_entry(tmp_path):
    with pytest.raises(SystemExit):
        main(["gen", "--family", "ball", "--d", "2", "--params", "facet_eps", "-o",
              str(tmp_path / "x.csv")])


def test_build_and_query_round_trip(tmp_path, body_file):
    q = tmp_path / "q.csv"
    tree = tmp_path / "tree.npz"
    out = tmp_path / "answers.csv"
    assert main(["gen-queries", "--body", str(body_file), "--eps", "0.05", "--counts", "200",
                 "200", "200", "--seed", "1", "-o", str(q)]) == 0
    assert main(["build", "--body", str(body_file), "--eps", "0.05", "--t", "3", "--witness",
                 "-o", str(tree)]) == 0
    assert main(["query", "--tree", str(tree), "--points", str(q), "-o", str(out)]) == 0
    L = formats.read_labeled(q)
    rows = _rows(out)
    assert [int(r["query_id"]) for r in rows] == list(range(600))
    inside = np.array([r["inside"] == "1" for r in rows])
    assert inside[L.stratum == "inside"].all() and not inside[L.stratum != "inside"].any()
    K = formats.read_polytope(body_file)
    for r, x in zip(rows, L.points):
        w = int(r["witness"])
        if r["inside"] == "0" and w >= 0:
            assert K.normals[w] @ x > K.offsets[w]


def test_build_canonicalizes_bodies_outside_the_cube(tmp_path):
    from polymem.geometry import Polytope
    U = np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1], [1, 1]]) / [[1], [1], [1], [1], [math.sqrt(2)]]
    K = Polytope(U, np.array([3.0, 3.0, 1.0, 1.0, 3.0]))
    body, tree, pts, out = (tmp_path / n for n in ("k.csv", "t.npz", "p.csv", "a.csv"))
    formats.write_polytope(K, body)
    X = np.array([[0.0, 0.0], [2.9, 0.0], [0.0, 1.5], [-3.5, 0.0]])
    formats.write_points(X, pts)
    assert main(["build", "--body", str(body), "--eps", "0.05", "--t", "4", "-o", str(tree)]) == 0
    main(["query", "--tree", str(tree), "--points", str(pts), "-o", str(out)])
    got = [r["inside"] == "1" for r in _rows(out)]
    assert got == [exact_membership(K, x) for x in X]


def test_query_to_stdout(tmp_path, body_file, capsys):
    tree, pts = tmp_path / "t.npz", tmp_path / "p.csv"
    formats.write_points(np.zeros((3, 2)), pts)
    main(["build", "--body", str(body_file), "--eps", "0.1", "--t", "2", "-o", str(tree)])
    capsys.readouterr()
    main(["query", "--tree", str(tree), "--points", str(pts)])
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "query_id,inside,witness,cost" and len(lines) == 4
    assert all(l.split(",")[1] == "1" for l in lines[1:])


def test_ann_build_and_query(tmp_path):
    pts, idx, qs, out = (tmp_path / n for n in ("x.csv", "i.bin", "q.csv", "a.csv"))
    assert main(["gen-points", "--d", "2", "--n", "150", "--seed", "2", "-o", str(pts)]) == 0
    assert main(["ann-build", "--points", str(pts), "--eps", "0.1", "--t", "2", "-o", str(idx)]) == 0
    X = formats.read_points(pts)
    I = formats.read_index(idx)
    Q = np.random.default_rng(3).uniform(I.lo, I.lo + I.side, size=(300, 2))
    formats.write_points(Q, qs)
    assert main(["ann-query", "--index", str(idx), "--queries", str(qs), "-o", str(out)]) == 0
    rows = _rows(out)
    exact = np.linalg.norm(Q[:, None] - X[None], axis=2).min(axis=1)
    for r, q, e in zip(rows, Q, exact):
        site = int(r["site_id"])
        dist = float(r["distance"])
        assert dist == pytest.approx(np.linalg.norm(X[site] - q), abs=1e-12)
        assert dist <= 1.1 * e + 1e-12


def test_gen_points_kinds(tmp_path):
    p = tmp_path / "s.csv"
    main(["gen-points", "--d", "3", "--n", "40", "--kind", "sphere", "--seed", "1", "-o", str(p)])
    X = formats.read_points(p)
    assert X.shape == (40, 3) and np.allclose(np.linalg.norm(X, axis=1), 1)


def test_bench_writes_csv_and_exit_status(tmp_path):
    cfg, out = tmp_path / "cfg.toml", tmp_path / "out.csv"
    cfg.write_text('families = ["random-tangent"]\nd = [2]\neps = [0.1, 0.05, 0.025]\n'
                   'structures = ["splitreduce", "dudley"]\nqueries = [100, 100, 100]\n'
                   'random_tangent_n = 20\n')
    assert main(["bench", "--config", str(cfg), "-o", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 6 and {r["structure"] for r in rows} == {"splitreduce", "dudley"}
    assert all(int(r["inside_ok"]) == 100 and int(r["far_ok"]) == 200 for r in rows)


def test_bench_rejects_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("ladder = [0.1]\n")
    with pytest.raises(ValueError):
        main(["bench", "--config", str(cfg)])


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "polymem.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("build", "query", "ann-build", "ann-query", "gen", "gen-points", "gen-queries", "bench"):
        assert cmd in r.stdout
