import csv
import json
import shutil
from dataclasses import asdict

import pytest

from returnguard import bpr, cli, pipeline
from returnguard.evaluation import VARIANTS
from returnguard.rps import load_predictor
from returnguard.rps.service import serve_in_thread

from helpers import small_config


def run(capsys, *args):
    code = cli.main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def run_copy(small_run, tmp_path):
    dst = tmp_path / "run"
    shutil.copytree(small_run, dst)
    return dst


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(asdict(small_config())))
    return p


def test_gen_data_twice_gives_identical_hashes(tmp_path, capsys, config_file):
    for name in ("a", "b"):
        code, _, err = run(capsys, "gen-data", "--out-dir", tmp_path / name, "--seed", 5,
                           "--config", config_file)
        assert code == 0, err
    a = pipeline.Manifest(tmp_path / "a").artifact_hashes()
    b = pipeline.Manifest(tmp_path / "b").artifact_hashes()
    assert a == b and len(a) == 5


def test_missing_input_exits_2_with_one_json_line(tmp_path, capsys):
    code, out, err = run(capsys, "train-bpr", "--out-dir", tmp_path / "empty")
    assert code == 2
    (line,) = err.strip().splitlines()
    rec = json.loads(line)
    assert rec["error"] == "MissingArtifact" and rec["stage"] == "train-bpr"


def test_changed_upstream_artifact_exits_3_naming_the_stage(run_copy, capsys):
    ratings = run_copy / pipeline.RATINGS
    ratings.write_text(ratings.read_text() + "\n")
    code, _, err = run(capsys, "train-bpr", "--out-dir", run_copy)
    assert code == 3
    rec = json.loads(err.strip())
    assert rec["error"] == "StaleArtifact" and rec["stage"] == "implicit"
    assert rec["path"] == pipeline.RATINGS


def test_rerunning_a_stage_is_idempotent(run_copy, capsys):
    before = pipeline.Manifest(run_copy).artifact_hashes()
    code, out, _ = run(capsys, "fit-encoder", "--out-dir", run_copy)
    assert code == 0 and json.loads(out)["columns"]
    code, _, _ = run(capsys, "train-bpr", "--out-dir", run_copy)
    assert code == 0
    assert pipeline.Manifest(run_copy).artifact_hashes() == before


def test_evaluate_writes_five_rows_in_ladder_order(run_copy, capsys):
    code, out, err = run(capsys, "evaluate", "--out-dir", run_copy)
    assert code == 0, err
    summary = json.loads(out)
    assert list(summary) == sorted(summary)  # printed with sorted keys
    with open(run_copy / "eval" / "ablation.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["variant"] for r in rows] == [v[0] for v in VARIANTS]
    for name in ("roc.csv", "pr.csv", "ablation.txt"):
        assert (run_copy / "eval" / name).stat().st_size > 0


def test_validate_reports_a_clean_dataset(capsys, run_copy):
    code, out, _ = run(capsys, "validate", "--out-dir", run_copy)
    assert code == 0 and json.loads(out)["violations"] == []


def test_decide_matches_predict_against_a_running_service(small_run, capsys):
    carts = pipeline.modelling_set(pipeline.read_carts(small_run / pipeline.CARTS),
                                   pipeline._config(small_run)).eval
    srv, _ = serve_in_thread(load_predictor(small_run))
    try:
        host, port = srv.server_address[:2]
        for cart in carts[:5]:
            req = json.dumps({"user_id": cart.user_id, "items": cart.product_ids,
                              "delivery_city": cart.delivery_city, "platform": cart.platform.value,
                              "payment_mode": cart.payment_mode.value,
                              "timestamp_ms": cart.order_timestamp})
            code, out, err = run(capsys, "decide", "--model-dir", small_run, "--request", req)
            assert code == 0, err
            offline = json.loads(out)
            code, out, err = run(capsys, "predict", "--url", f"http://{host}:{port}", "--request", req)
            assert code == 0, err
            online = json.loads(out)
            for key in ("cart_return_probability", "per_item_probabilities", "segment", "decision",
                        "model_versions"):
                assert online[key] == offline[key]
    finally:
        srv.shutdown()
        srv.server_close()


def test_decide_reads_a_request_file_and_rejects_bad_json(small_run, capsys, tmp_path):
    p = tmp_path / "req.json"
    p.write_text(json.dumps({"user_id": "x", "items": ["y"], "delivery_city": "Delhi",
                             "platform": "App", "payment_mode": "Prepaid"}))
    code, out, _ = run(capsys, "decide", "--model-dir", small_run, "--request", f"@{p}")
    assert code == 0 and "decision" in json.loads(out)
    code, _, err = run(capsys, "decide", "--model-dir", small_run, "--request", "{oops")
    assert code == 2 and json.loads(err)["error"] == "BadRequest"


def test_predict_without_a_service_fails_cleanly(capsys):
    code, _, err = run(capsys, "predict", "--url", "http://127.0.0.1:9", "--timeout", 2,
                       "--request", "{}")
    assert code == 1 and json.loads(err)["error"] == "ConnectionError"


def test_embed_query_and_gbm_dump(small_run, capsys):
    emb = bpr.EmbeddingMatrix.load(small_run / pipeline.BPR)
    a, b = emb.item_ids[:2]
    user = emb.user_ids[0]
    code, out, _ = run(capsys, "embed", "query", "--out-dir", small_run, "--item", a, "--item", b)
    assert code == 0 and -1.0 <= json.loads(out)["similarity"] <= 1.0
    code, out, _ = run(capsys, "embed", "query", "--out-dir", small_run, "--item", a, "--user", user)
    assert code == 0 and isinstance(json.loads(out)["affinity"], float)
    code, _, err = run(capsys, "embed", "query", "--out-dir", small_run, "--item", "nope", "--user", user)
    assert code == 2 and json.loads(err)["error"] == "UnknownId"
    code, out, _ = run(capsys, "gbm", "dump", "--out-dir", small_run, "--max-trees", 2)
    assert code == 0 and out.count("\ntree ") == 2 and "<=" in out


def test_unknown_option_is_a_single_json_error(capsys):
    code, _, err = run(capsys, "gen-data", "--bogus")
    assert code == 2 and json.loads(err)["error"] == "NoSuchOption"
