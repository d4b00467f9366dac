import csv
import json
import math

import numpy as np
import pytest

from expoloss.cli import main
from expoloss.experiments import reaggregate, strip_wall_clock
from expoloss.model import load_checkpoint

SMALL = ["--dataset", "gaussians", "--n-train", "60", "--n-test", "100", "--dim", "2",
         "--separation", "4", "--epochs", "5", "--batch-size", "10"]


def run(argv):
    return main([str(a) for a in argv])


def read_json(p):
    return json.loads(p.read_text())


def test_transform_plot_columns(tmp_path):
    out = tmp_path / "fig.csv"
    assert run(["transform-plot", "--out", out, "--steps", 301, "--range", -4, 4]) == 0
    rows = list(csv.reader(out.open()))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    assert header == ["yhat", "logistic_e1", "logistic_e0.75", "logistic_e0.6",
                      "hinge_e1", "hinge_e0.75", "hinge_e0.6"]
    yhat = body[:, 0]
    np.testing.assert_allclose(body[:, 1], np.logaddexp(0, -yhat), rtol=0, atol=1e-15)
    np.testing.assert_allclose(body[:, 4], np.maximum(0, 1 - yhat), rtol=0, atol=0)
    assert np.all(np.diff(body[:, 1:], axis=0) <= 0)


def test_transform_plot_default_config_matches_figure_setup(tmp_path):
    out = tmp_path / "fig.csv"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"steps": 11}))
    assert run(["transform-plot", "--out", out, "--config", cfg]) == 0
    rows = list(csv.reader(out.open()))
    assert len(rows) == 12
    # c = 0.005 default: the e=0.6 logistic value at yhat = 3 is log(1 + exp(-3**0.6))
    lookup = {float(r[0]): r for r in rows[1:]}
    assert float(lookup[3.0][3]) == pytest.approx(math.log1p(math.exp(-3 ** 0.6)), rel=1e-14)


def test_transform_plot_bad_steps(tmp_path):
    assert run(["transform-plot", "--steps", 1, "--out", tmp_path / "x.csv"]) == 2


@pytest.mark.parametrize("loss", ["logistic", "hinge", "softmax"])
def test_gradcheck_passes(tmp_path, loss):
    out = tmp_path / "g.json"
    assert run(["gradcheck", "--loss", loss, "--e", 1, "--e", 0.6, "--out", out]) == 0
    doc = read_json(out)
    assert doc["passed"] and doc["failures"] == []
    assert [c["e"] for c in doc["checks"]] == [1.0, 0.6]
    assert all(c["max_rel_err"] <= 1e-6 for c in doc["checks"])


def test_gradcheck_failure_exit_code(tmp_path):
    out = tmp_path / "g.json"
    cfg = tmp_path / "c.json"
    # a coarse step cannot meet an impossible tolerance
    cfg.write_text(json.dumps({"h": 0.5, "tol": 1e-12, "samples": 20}))
    assert run(["gradcheck", "--loss", "logistic", "--config", cfg, "--out", out]) == 1
    doc = read_json(out)
    assert not doc["passed"] and doc["failures"]


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"no_such_key": 1}))
    assert run(["gradcheck", "--config", cfg]) == 2
    err = capsys.readouterr().err
    assert json.loads(err.strip().splitlines()[-1])["error"] == "configuration"
    assert run(["gradcheck", "--config", tmp_path / "missing.json"]) == 2
    assert run(["gradcheck", "--e", 1.5]) == 2


def test_config_overrides_flags(tmp_path):
    out = tmp_path / "g.json"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"e": [0.75], "samples": 10}))
    assert run(["gradcheck", "--e", 0.6, "--samples", 50, "--config", cfg, "--out", out]) == 0
    doc = read_json(out)
    assert doc["config"]["e"] == [0.75] and doc["config"]["samples"] == 10


def test_train_streams_metrics_and_saves(tmp_path, capsys):
    out = tmp_path / "t.json"
    ckpt = tmp_path / "m.json"
    assert run(["train", *SMALL, "--e", 0.6, "--out", out, "--save-model", ckpt]) == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert [l["epoch"] for l in lines] == list(range(5))
    assert set(lines[0]) == {"epoch", "train_loss", "train_acc", "test_acc", "effective_e"}
    # floor(0.1 * 5) = 0 warm-up epochs
    assert lines[0]["effective_e"] == 0.6
    doc = read_json(out)
    assert doc["config"]["e"] == 0.6 and doc["config"]["data"]["n_train"] == 60
    assert doc["provenance"]["train"]["source"] == "gaussians"
    assert doc["provenance"]["test"]["n"] == 100
    model = load_checkpoint(ckpt)
    assert model.w.size == 3


def test_train_warmup_trace(tmp_path, capsys):
    out = tmp_path / "t.json"
    assert run(["train", *SMALL, "--epochs", 20, "--e", 0.6, "--out", out]) == 0
    trace = read_json(out)["runs"][0]["trace"]
    assert [m["effective_e"] for m in trace] == [1.0, 1.0] + [0.6] * 18


def test_train_mlp_softmax_blobs(tmp_path):
    out = tmp_path / "t.json"
    assert run(["train", "--dataset", "blobs", "--classes", 3, "--dim", 4, "--n-train", 90,
                "--n-test", 90, "--loss", "softmax", "--hidden", 8, "--optimizer", "adam",
                "--lr", 0.01, "--epochs", 5, "--out", out]) == 0
    assert read_json(out)["runs"][0]["final_test_acc"] is not None


def test_train_csv_dataset(tmp_path):
    p = tmp_path / "d.csv"
    rng = np.random.default_rng(0)
    X = rng.standard_normal((40, 2))
    y = np.where(X[:, 0] > 0, 1, -1)
    p.write_text("a,b,label\n" + "".join(f"{a},{b},{c}\n" for (a, b), c in zip(X, y)))
    out = tmp_path / "t.json"
    assert run(["train", "--dataset", "csv", "--data-path", p, "--n-test", 10, "--epochs", 3,
                "--normalize", "--out", out]) == 0
    doc = read_json(out)
    assert doc["provenance"]["train"]["norm_state"] == "unit-ball"
    assert doc["provenance"]["train"]["n"] == 30


def test_csv_parse_error_exit_code(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,label\nx,1\n")
    assert run(["train", "--dataset", "csv", "--data-path", p, "--n-test", 1]) == 2


def test_missing_mnist_is_config_error(tmp_path):
    assert run(["train", "--dataset", "mnist", "--data-path", tmp_path]) == 2


def test_divergence_exit_code(tmp_path, monkeypatch):
    import expoloss.optim as optim
    real = optim.loss_batch
    monkeypatch.setattr(optim, "loss_batch", lambda s, a, b: (real(s, a, b)[0] * np.nan, real(s, a, b)[1]))
    assert run(["train", *SMALL, "--out", tmp_path / "t.json"]) == 1


def test_noise_bench_shape_and_reaggregation(tmp_path):
    out = tmp_path / "nb.json"
    assert run(["noise-bench", *SMALL, "--e", 1, "--e", 0.6, "--noise-rate", 0, "--noise-rate", 0.4,
                "--seeds", 5, "--reference", "mnist", "--out", out]) == 0
    doc = read_json(out)
    assert len(doc["cells"]) == 4
    for cell in doc["cells"]:
        assert len(cell["runs"]) == 5
        assert [r["seed"] for r in cell["runs"]] == list(range(5))
    again = reaggregate(doc)
    for cell, re_cell in zip(doc["cells"], again["cells"]):
        assert cell["mean_test_acc"] == re_cell["mean_test_acc"]
        assert cell["std_test_acc"] == re_cell["std_test_acc"]
    assert again["grid"] == doc["grid"]
    assert set(doc["grid"]) == {"0.00", "0.40"}
    assert doc["reference"]["status"].endswith("not reproduced")
    # noise touches train labels only
    noisy = [r["realized_noise"] for c in doc["cells"] if c["noise_rate"] == 0.4 for r in c["runs"]]
    assert all(0.2 < v < 0.6 for v in noisy)
    assert doc["provenance"]["test"].get("noise_rate") is None


def test_noise_bench_parallel_matches_serial(tmp_path, monkeypatch):
    argv = ["noise-bench", *SMALL, "--e", 1, "--e", 0.6, "--noise-rate", 0.2, "--seeds", 2]
    monkeypatch.setenv("RL_THREADS", "1")
    assert run([*argv, "--out", tmp_path / "a.json"]) == 0
    monkeypatch.setenv("RL_THREADS", "2")
    assert run([*argv, "--out", tmp_path / "b.json"]) == 0
    assert strip_wall_clock(read_json(tmp_path / "a.json")) == strip_wall_clock(read_json(tmp_path / "b.json"))


def test_noise_bench_bad_rate(tmp_path):
    assert run(["noise-bench", *SMALL, "--noise-rate", 1.0, "--out", tmp_path / "x.json"]) == 2


def test_noise_bench_clean_separable_e_values_agree(tmp_path):
    out = tmp_path / "nb.json"
    assert run(["noise-bench", "--dataset", "gaussians", "--separation", 8, "--n-train", 200,
                "--n-test", 1000, "--epochs", 10, "--batch-size", 20, "--e", 1, "--e", 0.6,
                "--noise-rate", 0, "--seeds", 20, "--out", out]) == 0
    grid = read_json(out)["grid"]["0.00"]
    assert abs(grid["1.00"] - grid["0.60"]) <= 0.01


def _hand_query():
    return {"N": 100000, "d": 5, "M": 1, "epsilon": 0.3, "L_l": 1, "C_l": math.log(2), "L_R": 0.1}


def test_bounds_hand_example(tmp_path):
    q = tmp_path / "q.json"
    q.write_text(json.dumps(dict(_hand_query(), expect={"risk_lipschitz.confidence": 1.0,
                                                        "risk_lipschitz.covering_radius": 0.75,
                                                        "tol": 1e-9})))
    out = tmp_path / "b.json"
    assert run(["bounds", q, "--out", out]) == 0
    doc = read_json(out)
    assert doc["passed"]
    r = doc["results"][0]["risk_lipschitz"]
    assert r["B"] == pytest.approx(0.1 + math.log(2), rel=1e-12)
    assert r["query"]["L_R_of"] == "constant 0.1"


def test_bounds_failed_expectation(tmp_path):
    q = tmp_path / "q.json"
    q.write_text(json.dumps(dict(_hand_query(), expect={"loss_lipschitz.confidence": 0.5})))
    out = tmp_path / "b.json"
    assert run(["bounds", q, "--out", out]) == 1
    assert read_json(out)["failures"][0]["key"] == "loss_lipschitz.confidence"


def test_bounds_list_with_estimators(tmp_path):
    q = tmp_path / "q.json"
    q.write_text(json.dumps([
        {"N": 100000, "d": 5, "M": 5, "epsilon": 0.1, "loss": "logistic", "e": 0.6,
         "L_R": {"estimator": "uniform", "loss": "logistic", "e": 0.6}},
        {"N": 1000, "d": 2, "M": 2, "epsilon": 0.2, "L_R": [[0.01, 0.2], [0.1, 0.5], [10, 1.0]]},
    ]))
    out = tmp_path / "b.json"
    assert run(["bounds", q, "--out", out]) == 0
    res = read_json(out)["results"]
    assert res[0]["risk_lipschitz_better"]
    assert res[0]["risk_lipschitz"]["query"]["L_R_source"] == "uniform-margin"
    assert res[1]["risk_lipschitz"]["query"]["L_R_source"] == "table"


def test_bounds_bad_query(tmp_path):
    q = tmp_path / "q.json"
    q.write_text(json.dumps({"N": 10}))
    assert run(["bounds", q]) == 2
    assert run(["bounds"]) == 2


def test_deviation_check_small_run(tmp_path):
    out = tmp_path / "l.json"
    assert run(["lemma2-mc", "--trials", 1000, "--n-reference", 100000, "--out", out]) == 0
    doc = read_json(out)
    rep = doc["report"]
    assert doc["passed"] and rep["frequency"] <= rep["hoeffding_bound"] + rep["slack"]
    assert np.linalg.norm(np.subtract(doc["w2"], doc["config"]["w1"])) == pytest.approx(0.1)


def test_deviation_check_rejects_softmax(tmp_path):
    assert run(["lemma2-mc", "--loss", "softmax", "--trials", 1000]) == 2


@pytest.mark.parametrize("argv", [
    ["transform-plot", "--steps", 51],
    ["gradcheck", "--loss", "hinge", "--e", 0.6, "--samples", 30],
    ["train", *SMALL, "--e", 0.6, "--noise-rate", 0.2],
    ["noise-bench", *SMALL, "--e", 0.6, "--noise-rate", 0.2, "--seeds", 2],
    ["lemma2-mc", "--trials", 1000, "--n-reference", 50000],
])
def test_runs_are_reproducible(tmp_path, argv, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run([*argv, "--out", a]) == 0
    assert run([*argv, "--out", b]) == 0
    if argv[0] == "transform-plot":
        assert a.read_bytes() == b.read_bytes()
        return
    da, db = read_json(a), read_json(b)
    assert json.dumps(strip_wall_clock(da)).encode() == json.dumps(strip_wall_clock(db)).encode()
    assert json.loads(json.dumps(da)) == da


def _write_fake_mnist(root, n_train=60, n_test=30):
    import struct
    rng = np.random.default_rng(0)

    def idx(path, dims, payload):
        head = bytes([0, 0, 8, len(dims)]) + b"".join(struct.pack(">I", d) for d in dims)
        path.write_bytes(head + payload.astype(np.uint8).tobytes())

    for prefix, n in (("train", n_train), ("t10k", n_test)):
        labels = rng.integers(0, 10, n)
        images = rng.integers(0, 40, (n, 28, 28))
        images[np.arange(n), labels, :] = 255
        idx(root / f"{prefix}-images-idx3-ubyte", (n, 28, 28), images)
        idx(root / f"{prefix}-labels-idx1-ubyte", (n,), labels)


def test_noise_bench_on_idx_directory(tmp_path):
    _write_fake_mnist(tmp_path)
    out = tmp_path / "nb.json"
    assert run(["noise-bench", "--dataset", "mnist", "--data-path", tmp_path, "--n-train", 40,
                "--n-test", 20, "--loss", "softmax", "--hidden", 16, "--optimizer", "adam",
                "--lr", 0.01, "--epochs", 3, "--e", 1, "--e", 0.6, "--noise-rate", 0.4,
                "--seeds", 2, "--out", out]) == 0
    doc = read_json(out)
    assert doc["provenance"]["train"]["n"] == 40 and doc["provenance"]["train"]["d"] == 784
    assert doc["provenance"]["test"]["n_classes"] == 10
