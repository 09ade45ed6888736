import io
import time

import numpy as np
import pytest

from actioncast.events import write_sessions
from actioncast.patches import PatchDb, crop, normalize_dpi, select_clicked_region
from actioncast.synth import (
    ProfileError,
    SceneButton,
    SyntheticScene,
    WorkflowProfile,
    generate_session,
    geometry_resolver,
    load_profile,
    marginal_baseline,
    oracle_accuracy,
    render_scene,
)
from actioncast.tokenizer import tokenize_events


class TestProfiles:
    def test_bundled_profiles_load(self):
        for name in ("benchmark", "cycle3", "uniform8"):
            profile = load_profile(name)
            assert profile.is_irreducible()

    def test_missing_profile_errors(self):
        with pytest.raises(FileNotFoundError):
            load_profile("definitely-not-a-profile")

    def test_bad_transition_rows_rejected(self):
        with pytest.raises(ProfileError, match="transition"):
            WorkflowProfile(
                name="bad",
                states=["a", "b"],
                transition=[[0.5, 0.4], [0.0, 1.0]],
                emissions=[[1.0], [1.0]],
                templates=[{"type": "key", "key": "A"}],
                apps=["x", "x"],
                dwell=[1.0, 1.0],
            )

    def test_noise_out_of_range_rejected(self):
        with pytest.raises(ProfileError, match="noise"):
            WorkflowProfile(
                name="bad",
                states=["a"],
                transition=[[1.0]],
                emissions=[[1.0]],
                templates=[{"type": "key", "key": "A"}],
                apps=["x"],
                dwell=[1.0],
                noise=1.5,
            )

    def test_json_round_trip(self):
        profile = load_profile("benchmark")
        again = WorkflowProfile.from_json(profile.to_json())
        assert again.states == profile.states
        assert np.array_equal(again.transition, profile.transition)
        assert len(again.scenes) == len(profile.scenes)


class TestGeneration:
    def test_byte_identical_for_same_seed(self):
        profile = load_profile("benchmark")
        out = []
        for _ in range(2):
            events, _ = generate_session(profile, 50, seed=3)
            buf = io.StringIO()
            write_sessions([events], buf)
            out.append(buf.getvalue())
        assert out[0] == out[1]

    def test_cycle_profile_repeats(self):
        profile = load_profile("cycle3")
        _, truth = generate_session(profile, 30, seed=7)
        labels = [a.label for a in truth]
        # a rotation of ABC repeated ten times
        start = labels[0]
        expected = {"A": "ABC", "B": "BCA", "C": "CAB"}[start] * 10
        assert "".join(labels) == expected

    @pytest.mark.parametrize("seed", range(20))
    def test_round_trip_noise_free(self, seed):
        profile = load_profile("cycle3")
        events, truth = generate_session(profile, 40, seed=seed)
        assert tokenize_events(events, geometry_resolver(profile)) == truth

    def test_round_trip_with_noise_and_buttons(self):
        profile = load_profile("benchmark")
        for seed in range(5):
            events, truth = generate_session(profile, 300, seed=seed)
            assert tokenize_events(events, geometry_resolver(profile)) == truth

    def test_noise_changes_sequences(self):
        profile = load_profile("benchmark")
        assert profile.noise == 0.1

    def test_bad_length_rejected(self):
        with pytest.raises(ProfileError):
            generate_session(load_profile("cycle3"), 0, seed=1)

    def test_scale_sanity(self, tmp_path):
        # Desk-scale benchmark corpus: >= 20k actions in < 10 s and < 20 MB.
        profile = load_profile("benchmark")
        t0 = time.monotonic()
        sessions = []
        total = 0
        for i in range(20):
            events, truth = generate_session(profile, 1000, seed=i)
            sessions.append(events)
            total += len(truth)
        elapsed = time.monotonic() - t0
        path = tmp_path / "out.jsonl"
        from actioncast.events import write_log

        write_log(sessions, path)
        assert total >= 20_000
        assert elapsed < 10.0
        assert path.stat().st_size < 20 * 1024 * 1024


class TestOracle:
    def test_deterministic_cycle_is_perfect(self):
        result = oracle_accuracy(load_profile("cycle3"), steps=100_000, seed=2)
        assert result.accuracy == 1.0

    def test_uniform_emitter_matches_analytic(self):
        result = oracle_accuracy(load_profile("uniform8"), steps=100_000, seed=5)
        assert abs(result.accuracy - 1 / 8) < 4 * result.stderr

    def test_reducible_chain_rejected(self):
        profile = WorkflowProfile(
            name="split",
            states=["a", "b"],
            transition=[[1.0, 0.0], [0.0, 1.0]],
            emissions=[[1.0, 0.0], [0.0, 1.0]],
            templates=[{"type": "key", "key": "A"}, {"type": "key", "key": "B"}],
            apps=["x", "x"],
            dwell=[1.0, 1.0],
        )
        with pytest.raises(ProfileError, match="reducible"):
            oracle_accuracy(profile, steps=100_000)

    def test_too_few_steps_rejected(self):
        with pytest.raises(ValueError):
            oracle_accuracy(load_profile("cycle3"), steps=10)

    def test_marginal_baseline(self):
        assert marginal_baseline([1, 1, 2], [1, 1, 2, 1]) == 0.75
        assert marginal_baseline([], []) == 0.0


class TestRendering:
    def test_deterministic_rasterization(self):
        scene = load_profile("benchmark").scenes["code"]
        a, _ = render_scene(scene)
        b, _ = render_scene(scene)
        assert np.array_equal(a.pixels, b.pixels)

    def test_empty_scene_has_no_boxes(self):
        scene = SyntheticScene(canvas=(100, 80), window=(10, 10, 80, 60), buttons=[])
        screenshot, boxes = render_scene(scene)
        assert boxes == []
        assert screenshot.pixels.shape == (80, 100, 3)

    def test_detector_returns_scene_rects(self):
        scene = load_profile("benchmark").scenes["web"]
        _, boxes = render_scene(scene)
        wx, wy = scene.window[0], scene.window[1]
        for button, box in zip(scene.buttons, boxes):
            assert box.rect == (wx + button.rect[0], wy + button.rect[1], button.rect[2], button.rect[3])

    def test_buttons_have_variance_in_every_channel(self):
        # Flat channels would break per-channel correlation matching.
        for app, scene in load_profile("benchmark").scenes.items():
            screenshot, boxes = render_scene(scene)
            for box in boxes:
                patch = crop(screenshot, box.rect)
                for c in range(3):
                    assert patch.pixels[:, :, c].std() > 1.0, (app, box)

    def test_click_pipeline_resolves_rendered_button(self):
        scene = load_profile("benchmark").scenes["code"]
        screenshot, boxes = render_scene(scene)
        db = PatchDb()
        target = boxes[1]
        cx = target.rect[0] + target.rect[2] // 2
        cy = target.rect[1] + target.rect[3] // 2
        picked = select_clicked_region(boxes, (cx, cy))
        assert picked is target
        patch = normalize_dpi(crop(screenshot, picked.rect), 96)
        pid = db.resolve_or_insert(patch)
        again = db.resolve_or_insert(normalize_dpi(crop(screenshot, picked.rect), 96))
        assert again == pid

    def test_window_offsets_resolve_to_same_patch(self):
        scene = load_profile("benchmark").scenes["term"]
        db = PatchDb()
        ids = set()
        for offset in ((80, 90), (280, 190), (10, 10)):
            screenshot, boxes = render_scene(scene, window_at=offset)
            patch = crop(screenshot, boxes[0].rect)
            ids.add(db.resolve_or_insert(patch))
        assert len(ids) == 1

    def test_oversized_window_position_rejected(self):
        scene = SyntheticScene(canvas=(100, 80), window=(10, 10, 80, 60), buttons=[])
        with pytest.raises(ProfileError):
            render_scene(scene, window_at=(90, 0))

    def test_duplicate_button_ids_rejected(self):
        with pytest.raises(ProfileError):
            SyntheticScene(
                canvas=(200, 200),
                window=(0, 0, 200, 200),
                buttons=[
                    SceneButton(id=1, rect=(10, 10, 40, 24), color=(150, 196, 120), glyph_seed=1),
                    SceneButton(id=1, rect=(80, 10, 40, 24), color=(120, 150, 200), glyph_seed=2),
                ],
            )
