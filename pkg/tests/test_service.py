import statistics
import time

import pytest
from fastapi.testclient import TestClient

from actioncast.config import ServiceConfig
from actioncast.service import create_app

from .conftest import button_profile
from .service_artifacts import build_artifacts


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    """Vision-ingested corpus, vocabulary, checkpoint, patch db, scenes."""
    return build_artifacts(tmp_path_factory.mktemp("service"))


@pytest.fixture()
def client(artifacts):
    return TestClient(create_app(artifacts["config"]))


def _create_session(client, artifacts, index=0):
    response = client.post(
        "/v1/sessions", json={"actions": str(artifacts["actions_path"]), "session_index": index}
    )
    assert response.status_code == 200
    return response.json()


class TestSessions:
    def test_create_and_shape(self, client, artifacts):
        body = _create_session(client, artifacts)
        assert body["cursor"] == 0
        assert body["length"] == 200
        assert body["eof"] is False

    def test_unknown_session_404(self, client):
        response = client.get("/v1/sessions/nope/predict")
        assert response.status_code == 404
        assert response.json()["error"] == "unknown_session"

    def test_bad_body_400(self, client):
        response = client.post("/v1/sessions", json={})
        assert response.status_code == 400
        assert response.json()["error"] == "bad_request"

    def test_step_walks_the_recorded_log(self, client, artifacts):
        sid = _create_session(client, artifacts)["id"]
        expected = [row.action.label for row in artifacts["sessions"][0][:5]]
        taken = []
        for _ in range(5):
            body = client.post(f"/v1/sessions/{sid}/step").json()
            taken.append(body["taken"]["action"])
            assert len(body["predictions"]) == 5
        assert taken == expected

    def test_step_past_end_marks_eof(self, client, artifacts):
        sid = _create_session(client, artifacts)["id"]
        for _ in range(200):
            client.post(f"/v1/sessions/{sid}/step")
        body = client.post(f"/v1/sessions/{sid}/step").json()
        assert body["eof"] is True

    def test_reset_returns_to_start(self, client, artifacts):
        sid = _create_session(client, artifacts)["id"]
        for _ in range(7):
            client.post(f"/v1/sessions/{sid}/step")
        body = client.post(f"/v1/sessions/{sid}/reset").json()
        assert body["cursor"] == 0 and body["synthetic"] == []

    def test_session_from_event_log(self, client, artifacts, tmp_path):
        from actioncast.events import write_log
        from actioncast.synth import generate_session

        events, truth = generate_session(button_profile(), 30, seed=9)
        log_path = tmp_path / "log.jsonl"
        write_log([events], log_path)
        response = client.post("/v1/sessions", json={"log": str(log_path)})
        assert response.status_code == 200
        assert response.json()["length"] == 30


class TestPredict:
    def test_topk_shape_and_order(self, client, artifacts):
        sid = _create_session(client, artifacts)["id"]
        for _ in range(6):
            client.post(f"/v1/sessions/{sid}/step")
        body = client.get(f"/v1/sessions/{sid}/predict?k=5").json()
        probs = [p["prob"] for p in body["predictions"]]
        assert len(probs) == 5
        assert probs == sorted(probs, reverse=True)
        assert sum(probs) <= 1.0 + 1e-9

    def test_button_filter_renormalizes(self, client, artifacts):
        sid = _create_session(client, artifacts)["id"]
        for _ in range(6):
            client.post(f"/v1/sessions/{sid}/step")
        body = client.get(f"/v1/sessions/{sid}/predict?k=3&filter=buttons").json()
        assert all(p["action"].startswith("click:left@patch/") for p in body["predictions"])
        assert sum(p["prob"] for p in body["predictions"]) == pytest.approx(1.0, abs=1e-6)

    def test_k1_matches_unfiltered_argmax(self, client, artifacts):
        sid = _create_session(client, artifacts)["id"]
        for _ in range(4):
            client.post(f"/v1/sessions/{sid}/step")
        top1 = client.get(f"/v1/sessions/{sid}/predict?k=1").json()["predictions"][0]
        top5 = client.get(f"/v1/sessions/{sid}/predict?k=5").json()["predictions"]
        assert top1["action"] == top5[0]["action"]

    def test_empty_filter_mass_409(self, client, artifacts):
        sid = _create_session(client, artifacts)["id"]
        response = client.get(f"/v1/sessions/{sid}/predict?k=2&filter=label:Z")
        assert response.status_code == 409
        assert response.json()["error"] == "filter_empty"

    def test_bad_filter_400(self, client, artifacts):
        sid = _create_session(client, artifacts)["id"]
        assert client.get(f"/v1/sessions/{sid}/predict?filter=wat").status_code == 400

    def test_button_predictions_carry_patch_refs(self, client, artifacts):
        sid = _create_session(client, artifacts)["id"]
        for _ in range(6):
            client.post(f"/v1/sessions/{sid}/step")
        body = client.get(f"/v1/sessions/{sid}/predict?k=5&filter=buttons").json()
        refs = [p.get("patch_ref") for p in body["predictions"]]
        assert all(r and r.startswith("/v1/patches/") for r in refs)

    def test_latency_under_100ms(self, client, artifacts):
        sid = _create_session(client, artifacts)["id"]
        client.get(f"/v1/sessions/{sid}/predict?k=5")  # warmup
        samples = []
        for _ in range(5):
            t0 = time.monotonic()
            client.get(f"/v1/sessions/{sid}/predict?k=5")
            samples.append(time.monotonic() - t0)
        assert statistics.median(samples) < 0.1


class TestWhatIf:
    def test_insert_shifts_window_and_undo_restores(self, client, artifacts):
        sid = _create_session(client, artifacts)["id"]
        for _ in range(5):
            client.post(f"/v1/sessions/{sid}/step")
        before = client.get(f"/v1/sessions/{sid}/predict?k=5").json()

        inserted = client.post(f"/v1/sessions/{sid}/whatif", json={"action": "CTRL+A"}).json()
        assert inserted["synthetic"] == ["CTRL+A"]
        assert inserted["window"][-1] == "CTRL+A"

        undone = client.post(f"/v1/sessions/{sid}/whatif", json={"undo": True}).json()
        assert undone["synthetic"] == []
        after = client.get(f"/v1/sessions/{sid}/predict?k=5").json()
        assert after["predictions"] == before["predictions"]
        assert after["window"] == before["window"]

    def test_whatif_matches_direct_api_semantics(self, client, artifacts):
        sid = _create_session(client, artifacts)["id"]
        for _ in range(5):
            client.post(f"/v1/sessions/{sid}/step")
        via_whatif = client.post(f"/v1/sessions/{sid}/whatif", json={"action": "B"}).json()
        assert via_whatif["window"][-1] == "B"
        direct = client.get(f"/v1/sessions/{sid}/predict?k=5").json()
        assert via_whatif["predictions"] == direct["predictions"]

    def test_undo_with_nothing_409(self, client, artifacts):
        sid = _create_session(client, artifacts)["id"]
        response = client.post(f"/v1/sessions/{sid}/whatif", json={"undo": True})
        assert response.status_code == 409

    def test_unparseable_action_400(self, client, artifacts):
        sid = _create_session(client, artifacts)["id"]
        response = client.post(f"/v1/sessions/{sid}/whatif", json={"action": "+++"})
        assert response.status_code == 400

    def test_step_clears_synthetic(self, client, artifacts):
        sid = _create_session(client, artifacts)["id"]
        client.post(f"/v1/sessions/{sid}/step")
        client.post(f"/v1/sessions/{sid}/whatif", json={"action": "B"})
        body = client.post(f"/v1/sessions/{sid}/step").json()
        assert body["synthetic"] == []


class TestVocabEndpoint:
    def test_vocab_lists_real_actions_only(self, client, artifacts):
        body = client.get("/v1/vocab").json()
        assert body["size"] == artifacts["vocab"].size
        assert len(body["actions"]) == body["size"] - 2  # PAD/UNK excluded
        assert "<PAD>" not in body["actions"] and "<UNK>" not in body["actions"]


class TestPatchesEndpoint:
    def test_patch_served_as_ppm(self, client, artifacts):
        pid = next(iter(artifacts["db"].entries))
        response = client.get(f"/v1/patches/{pid}.ppm")
        assert response.status_code == 200
        assert response.content.startswith(b"P6\n")

    def test_unknown_patch_404(self, client):
        assert client.get("/v1/patches/9999.ppm").status_code == 404


class TestField:
    def _session_with_button_prediction(self, client, artifacts):
        sid = _create_session(client, artifacts)["id"]
        for _ in range(8):
            client.post(f"/v1/sessions/{sid}/step")
        return sid

    def test_grid_matches_direct_pull(self, client, artifacts):
        from actioncast.field import AttractionTarget, pull_at

        sid = self._session_with_button_prediction(client, artifacts)
        body = client.get(
            f"/v1/sessions/{sid}/field", params={"ox": 0, "oy": 0, "nx": 4, "ny": 3, "step": 50}
        ).json()
        assert body["nx"] == 4 and body["ny"] == 3
        assert len(body["vectors"]) == 12
        targets = [
            AttractionTarget(center=tuple(t["center"]), rect=tuple(t["rect"]), confidence=t["confidence"])
            for t in body["targets"]
        ]
        assert targets, "expected located button targets"
        cfg = artifacts["config"].field_config()
        for idx, vec in enumerate(body["vectors"]):
            i, j = idx % 4, idx // 4
            direct = pull_at((i * 50.0, j * 50.0), targets, cfg)
            assert abs(vec[0] - direct[0]) < 1e-9 and abs(vec[1] - direct[1]) < 1e-9

    def test_located_targets_sit_on_scene_buttons(self, client, artifacts):
        sid = self._session_with_button_prediction(client, artifacts)
        body = client.get(f"/v1/sessions/{sid}/field").json()
        scene = button_profile().scenes["tool"]
        wx, wy = scene.window[0], scene.window[1]
        valid_rects = {
            (float(wx + b.rect[0]), float(wy + b.rect[1]), float(b.rect[2]), float(b.rect[3]))
            for b in scene.buttons
        }
        for t in body["targets"]:
            assert tuple(t["rect"]) in valid_rects

    def test_no_targets_gives_reason(self, artifacts, tmp_path):
        # a model-only service (no scenes, no db) can never locate targets
        cfg = ServiceConfig(
            checkpoint=artifacts["config"].checkpoint, vocab=artifacts["config"].vocab
        )
        client = TestClient(create_app(cfg))
        body = client.post(
            "/v1/sessions", json={"actions": str(artifacts["actions_path"])}
        ).json()
        response = client.get(f"/v1/sessions/{body['id']}/field").json()
        assert response["vectors"] == []
        assert response["reason"] == "no_located_targets"


class TestDeterminism:
    def test_restart_and_replay_identical(self, artifacts):
        transcripts = []
        for _ in range(2):
            client = TestClient(create_app(artifacts["config"]))
            sid = _create_session(client, artifacts)["id"]
            steps = []
            for _ in range(10):
                body = client.post(f"/v1/sessions/{sid}/step").json()
                steps.append((body["taken"], body["predictions"]))
            transcripts.append(steps)
        assert transcripts[0] == transcripts[1]
