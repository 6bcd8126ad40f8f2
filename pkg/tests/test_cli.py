import json

import numpy as np
import pytest

from sgreward.cli import main
from sgreward.parsing import serialize_cot
from sgreward.store import save_graphs, save_profile

from conftest import make_profile, make_table, perturb_graph, random_graph


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    profile = make_profile()
    table = make_table()
    rng = np.random.default_rng(0)
    graphs = [random_graph(rng, profile, image_id=f"img{i}", min_objects=2)
              for i in range(6)]

    save_profile(profile, tmp / "profile.json")
    save_graphs(graphs, tmp / "gt.jsonl")
    table.save(tmp / "table.jsonl")

    completion_rows = []
    for i, g in enumerate(graphs):
        pred = perturb_graph(rng, g, profile)
        completion_rows.append({
            "sample_id": f"s{i}", "image_id": g.image_id,
            "text": serialize_cot(pred, profile).response_text,
        })
    completion_rows.append({"sample_id": "bad", "image_id": "img0", "text": "garbage"})
    with (tmp / "completions.jsonl").open("w") as fh:
        for row in completion_rows:
            fh.write(json.dumps(row) + "\n")

    candidates = [
        {"image_id": "img0", "subject": graphs[0].objects[0].key,
         "predicate": "near", "object": graphs[0].objects[-1].key},
        {"image_id": "img1", "subject": "ghost.9", "predicate": "near",
         "object": graphs[1].objects[0].key},
    ]
    with (tmp / "candidates.jsonl").open("w") as fh:
        for row in candidates:
            fh.write(json.dumps(row) + "\n")

    return tmp, profile, graphs


def common(tmp, *extra):
    return ["--profile", str(tmp / "profile.json"), "--gt", str(tmp / "gt.jsonl"), *extra]


class TestScoreCommand:
    def test_writes_breakdowns(self, workspace):
        tmp, _, _ = workspace
        rc = main(["score", *common(tmp),
                   "--embeddings", str(tmp / "table.jsonl"),
                   "--completions", str(tmp / "completions.jsonl"),
                   "--out", str(tmp / "scores.jsonl"),
                   "--summary-out", str(tmp / "summary.json")])
        assert rc == 0
        rows = [json.loads(l) for l in (tmp / "scores.jsonl").read_text().splitlines()]
        assert len(rows) == 7
        assert all("reward" in r for r in rows[:-1])
        assert rows[-1]["reward"]["composite"] == 0.0  # garbage completion
        summary = json.loads((tmp / "summary.json").read_text())
        assert summary["summary"]["count"] == 7
        assert "config" in summary

    def test_idempotent(self, workspace):
        tmp, _, _ = workspace
        args = ["score", *common(tmp),
                "--embeddings", str(tmp / "table.jsonl"),
                "--completions", str(tmp / "completions.jsonl"),
                "--out", str(tmp / "scores2.jsonl"),
                "--summary-out", str(tmp / "summary2.json")]
        main(args)
        first = (tmp / "scores2.jsonl").read_bytes()
        main(args)
        assert (tmp / "scores2.jsonl").read_bytes() == first

    def test_missing_embeddings_flag_errors(self, workspace, capsys):
        tmp, _, _ = workspace
        rc = main(["score", *common(tmp),
                   "--completions", str(tmp / "completions.jsonl"),
                   "--out", str(tmp / "x.jsonl"), "--summary-out", str(tmp / "y.json")])
        assert rc == 2
        err = json.loads(capsys.readouterr().err)
        assert "error" in err


class TestEvalCommand:
    def test_report(self, workspace):
        tmp, _, _ = workspace
        rc = main(["eval", *common(tmp),
                   "--completions", str(tmp / "completions.jsonl"),
                   "--out", str(tmp / "report.json")])
        assert rc == 0
        doc = json.loads((tmp / "report.json").read_text())
        assert 0.0 <= doc["report"]["recall"] <= 1.0
        assert doc["report"]["failure_rate"] == pytest.approx(1 / 7)

    def test_perfect_fixture(self, workspace):
        tmp, profile, graphs = workspace
        perfect = tmp / "perfect.jsonl"
        with perfect.open("w") as fh:
            for i, g in enumerate(graphs):
                fh.write(json.dumps({
                    "sample_id": f"p{i}", "image_id": g.image_id,
                    "text": serialize_cot(g, profile).response_text}) + "\n")
        main(["eval", *common(tmp), "--completions", str(perfect),
              "--out", str(tmp / "perfect_report.json")])
        doc = json.loads((tmp / "perfect_report.json").read_text())
        assert doc["report"]["recall"] == 1.0


class TestFilterCommand:
    def test_theta_zero_retains_valid(self, workspace):
        tmp, _, _ = workspace
        rc = main(["filter", *common(tmp),
                   "--embeddings", str(tmp / "table.jsonl"),
                   "--candidates", str(tmp / "candidates.jsonl"),
                   "--theta", "0",
                   "--out", str(tmp / "retained.jsonl"),
                   "--drop-log", str(tmp / "drops.jsonl"),
                   "--summary-out", str(tmp / "fsummary.json")])
        assert rc == 0
        retained = (tmp / "retained.jsonl").read_text().splitlines()
        drops = [json.loads(l) for l in (tmp / "drops.jsonl").read_text().splitlines()]
        assert len(retained) + len(drops) == 2
        assert any(d["reason"] == "DANGLING_INSTANCE" for d in drops)

    def test_theta_one_drops_dissimilar(self, workspace):
        tmp, _, _ = workspace
        main(["filter", *common(tmp),
              "--embeddings", str(tmp / "table.jsonl"),
              "--candidates", str(tmp / "candidates.jsonl"),
              "--theta", "1.0",
              "--out", str(tmp / "retained1.jsonl"),
              "--drop-log", str(tmp / "drops1.jsonl"),
              "--summary-out", str(tmp / "fsummary1.json")])
        summary = json.loads((tmp / "fsummary1.json").read_text())
        assert summary["summary"]["retained"] <= summary["summary"]["input"]


class TestBuildCotAndStats:
    def test_build_cot_round_trip(self, workspace):
        tmp, profile, graphs = workspace
        rc = main(["build-cot", *common(tmp), "--out", str(tmp / "cot.jsonl")])
        assert rc == 0
        rows = [json.loads(l) for l in (tmp / "cot.jsonl").read_text().splitlines()]
        assert len(rows) == len(graphs)
        from sgreward.parsing import parse_completion
        for row in rows:
            gt = next(g for g in graphs if g.image_id == row["prompt_ref"])
            parsed = parse_completion(row["response"], profile, gt.width, gt.height)
            assert parsed.graph is not None

    def test_build_cot_then_score_gives_one(self, workspace):
        tmp, _, _ = workspace
        main(["build-cot", *common(tmp), "--out", str(tmp / "cot2.jsonl")])
        rows = [json.loads(l) for l in (tmp / "cot2.jsonl").read_text().splitlines()]
        completions = tmp / "self.jsonl"
        with completions.open("w") as fh:
            for i, row in enumerate(rows):
                fh.write(json.dumps({"sample_id": f"c{i}", "image_id": row["prompt_ref"],
                                     "text": row["response"]}) + "\n")
        main(["score", *common(tmp),
              "--embeddings", str(tmp / "table.jsonl"),
              "--completions", str(completions),
              "--out", str(tmp / "self_scores.jsonl"),
              "--summary-out", str(tmp / "self_summary.json")])
        scores = [json.loads(l) for l in (tmp / "self_scores.jsonl").read_text().splitlines()]
        for row in scores:
            assert row["reward"]["composite"] == pytest.approx(1.0, abs=1e-9)

    def test_build_cot_with_retained(self, workspace):
        tmp, profile, graphs = workspace
        retained = tmp / "retained_fixture.jsonl"
        subject = graphs[0].objects[0].key
        target = graphs[0].objects[-1].key
        retained.write_text(json.dumps({
            "image_id": graphs[0].image_id, "subject": subject,
            "predicate": "behind", "object": target}) + "\n")
        main(["build-cot", *common(tmp), "--retained", str(retained),
              "--out", str(tmp / "cot3.jsonl")])
        rows = [json.loads(l) for l in (tmp / "cot3.jsonl").read_text().splitlines()]
        merged_row = next(r for r in rows if r["prompt_ref"] == graphs[0].image_id)
        from sgreward.parsing import parse_completion
        parsed = parse_completion(merged_row["response"], profile, 640, 480)
        assert parsed.graph is not None
        spos = {r.spo() for r in parsed.graph.relations}
        baseline = {r.spo() for r in graphs[0].relations}
        if subject != target and (subject, "behind", target) not in baseline:
            assert (subject, "behind", target) in spos

    def test_stats(self, workspace):
        tmp, _, graphs = workspace
        rc = main(["stats", *common(tmp), "--out", str(tmp / "stats.json")])
        assert rc == 0
        doc = json.loads((tmp / "stats.json").read_text())
        assert doc["stats"]["images"] == len(graphs)
        assert doc["stats"]["relations"] == sum(len(g.relations) for g in graphs)

    def test_stats_idempotent(self, workspace):
        tmp, _, _ = workspace
        main(["stats", *common(tmp), "--out", str(tmp / "stats_a.json")])
        main(["stats", *common(tmp), "--out", str(tmp / "stats_b.json")])
        assert (tmp / "stats_a.json").read_bytes() == (tmp / "stats_b.json").read_bytes()


class TestBadInput:
    def test_nonexistent_file(self, workspace, capsys):
        tmp, _, _ = workspace
        rc = main(["stats", "--profile", str(tmp / "missing.json"),
                   "--gt", str(tmp / "gt.jsonl"), "--out", str(tmp / "o.json")])
        assert rc == 2
        assert "error" in json.loads(capsys.readouterr().err)
