import base64

import pytest
from fastapi.testclient import TestClient

from decomcam.sampledata import write_suite
from decomcam.service import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


@pytest.fixture(scope="module")
def suite_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("suite")
    write_suite(root, count=6, seed=2)
    return root


class TestHealthAndMethods:
    def test_health(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        assert response.json()["status"] == "ok"

    def test_methods(self, client):
        response = client.get("/methods")
        assert response.json()["methods"] == ["decomcam", "eigencam", "gradcam"]


class TestExplainEndpoint:
    def test_toy_explain_artifacts(self, client):
        response = client.post("/explain", json={"scorer": "toy", "p": 16, "q": 8, "seed": 1})
        assert response.status_code == 200
        body = response.json()
        q = len(body["singular_values"])
        assert q >= 1
        names = [a["filename"] for a in body["artifacts"]]
        assert sum("ossm" in n for n in names) == q
        assert any("overlay" in n for n in names)
        assert len(body["weights"]) == q
        assert abs(sum(body["weights"]) - 1.0) <= 1e-6
        png = base64.b64decode(body["artifacts"][0]["png_base64"])
        assert png[:8] == b"\x89PNG\r\n\x1a\n"
        assert body["sidecar"]["config"]["method"] == "decomcam"

    def test_unknown_method_is_config_error(self, client):
        response = client.post("/explain", json={"method": "scorecam"})
        assert response.status_code == 422
        assert response.json()["detail"]["category"] == "config"

    def test_missing_image_is_input_error(self, client):
        response = client.post("/explain", json={"image": "/nonexistent/image.png"})
        assert response.status_code == 404
        assert response.json()["detail"]["category"] == "input"

    def test_corrupt_dump_is_input_error(self, client, tmp_path_factory):
        bad = tmp_path_factory.mktemp("bad") / "corrupt.dcam"
        bad.write_bytes(b"XXXX not a dump")
        response = client.post("/explain", json={"scorer": "dump", "dump": str(bad)})
        assert response.status_code == 404
        detail = response.json()["detail"]
        assert detail["category"] == "input"
        assert "magic" in detail["message"]


class TestEvalEndpoint:
    def test_loc_suite(self, client, suite_dir):
        response = client.post(
            "/eval",
            json={
                "annotations": str(suite_dir / "annotations.jsonl"),
                "metric_suite": "loc",
                "p": 16,
                "q": 8,
            },
        )
        assert response.status_code == 200
        body = response.json()
        metrics = {row["metric"]: row["value"] for row in body["rows"]}
        assert metrics["pg-acc"] == 1.0
        assert metrics["maxboxaccv2"] >= 0.9
        assert body["sample_failures"] == 0
        assert body["csv"].splitlines()[2] == "method,metric,stratum,value"

    def test_missing_annotations_is_input_error(self, client):
        response = client.post("/eval", json={"annotations": "/nope.jsonl"})
        assert response.status_code == 404
        assert response.json()["detail"]["category"] == "input"

    def test_schema_error_lists_lines(self, client, tmp_path_factory):
        path = tmp_path_factory.mktemp("ann") / "bad.jsonl"
        path.write_text('{"id": "x"}\n', encoding="utf-8")
        response = client.post("/eval", json={"annotations": str(path)})
        assert response.status_code == 404
        assert "line 1" in response.json()["detail"]["message"]

    def test_partial_failures_counted(self, client, suite_dir, tmp_path_factory):
        root = tmp_path_factory.mktemp("partial")
        good = (suite_dir / "annotations.jsonl").read_text().splitlines()[:2]
        lines = good + [
            '{"id": "zz-missing", "image": "gone.png", "class": "planted-texture", '
            '"boxes": [{"x1": 0, "y1": 0, "x2": 4, "y2": 4}]}'
        ]
        # image paths are relative to the annotation file; keep originals reachable
        path = root / "annotations.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        import json as json_mod

        for line in good:
            name = json_mod.loads(line)["image"]
            (root / name).write_bytes((suite_dir / name).read_bytes())
        response = client.post(
            "/eval", json={"annotations": str(path), "p": 16, "q": 8, "metric_suite": "loc"}
        )
        assert response.status_code == 200
        body = response.json()
        assert body["sample_failures"] == 1
        assert any("zz-missing" in w for w in body["warnings"])
        assert '"error"' in body["jsonl"]
