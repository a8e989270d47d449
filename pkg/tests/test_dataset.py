import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import detailed_source_image, random_marker_plan, write_corpus

from copaint.dataset import (
    FilterResult,
    RemovalStrategy,
    SourceItem,
    TrainingPair,
    export_dataset,
    filter_pair,
    generate_dataset,
    load_corpus,
    make_partial,
    parse_strategies,
    read_manifest,
    remove_all,
    remove_random,
    remove_salient,
    remove_semantic,
    simulate_full,
    stable_hash64,
)
from copaint.errors import StrategyParameterError
from copaint.metrics import delta_pix
from copaint.planner import LossConfig, PlannerConfig
from copaint.render import render_plan
from copaint.types import Canvas, marker_setting

FAST = PlannerConfig(candidates_per_stroke=12, refine_iters=2)


class TestRemovalStrategy:
    def test_kind_validation(self):
        with pytest.raises(StrategyParameterError):
            RemovalStrategy(kind="remove_everything")

    @pytest.mark.parametrize("kwargs", [
        dict(kind="remove_all", fraction=0.5),
        dict(kind="remove_random", region_quantile=0.2),
        dict(kind="remove_salient", fraction=0.1),
        dict(kind="remove_semantic", fraction=0.1),
        dict(kind="remove_random"),  # missing its parameter
        dict(kind="remove_random", fraction=1.5),
    ])
    def test_parameter_kind_mismatch(self, kwargs):
        with pytest.raises(StrategyParameterError):
            RemovalStrategy(**kwargs)

    def test_defaults(self):
        assert remove_salient().region_quantile == 0.25
        assert remove_semantic().region_index == 0

    def test_obj_round_trip(self):
        for strat in (remove_all(), remove_random(0.3), remove_salient(0.4),
                      remove_semantic(1)):
            assert RemovalStrategy.from_obj(strat.to_obj()) == strat

    def test_parse_strategies(self):
        out = parse_strategies("all,random:0.3,salient,semantic")
        assert [s.kind for s in out] == ["remove_all", "remove_random",
                                         "remove_salient", "remove_semantic"]
        assert out[1].fraction == 0.3
        with pytest.raises(StrategyParameterError):
            parse_strategies("bogus")


class TestMakePartial:
    def setup_method(self):
        self.setting = marker_setting(stroke_budget=40)
        self.plan = random_marker_plan(1, 40, self.setting)
        self.img = np.random.default_rng(0).random((64, 64, 3))

    def test_remove_all(self):
        assert len(make_partial(self.plan, remove_all(), self.img, seed=0)) == 0

    def test_remove_random_exact_count_and_subset(self):
        partial = make_partial(self.plan, remove_random(0.5), self.img, seed=3)
        assert len(partial) == 20
        it = iter(self.plan.strokes)
        assert all(s in it for s in partial.strokes)  # subsequence check

    @given(st.integers(1, 60), st.floats(0.0, 1.0))
    @settings(max_examples=40, deadline=None)
    def test_remove_random_count_law(self, n, fraction):
        setting = marker_setting(stroke_budget=60)
        plan = random_marker_plan(7, n, setting)
        partial = make_partial(plan, remove_random(fraction), self.img, seed=1)
        assert len(partial) == n - int(np.floor(fraction * n + 0.5))

    def test_remove_random_deterministic(self):
        a = make_partial(self.plan, remove_random(0.4), self.img, seed=9)
        b = make_partial(self.plan, remove_random(0.4), self.img, seed=9)
        assert a.strokes == b.strokes

    def test_remove_salient_left_half_mass(self):
        # all saliency mass on the left half: removed strokes must have
        # midpoint x < 0.5
        img = np.full((64, 64, 3), 0.5)
        img[:, :32] = np.random.default_rng(1).random((64, 32, 3))
        partial = make_partial(self.plan, remove_salient(0.25), img, seed=0)
        removed = [s for s in self.plan.strokes if s not in partial.strokes]
        assert removed
        for stroke in removed:
            assert stroke.midpoint()[0] < 0.5

    def test_remove_semantic_largest_region(self):
        img = np.zeros((64, 64, 3))
        img[:, :16] = (0.9, 0.1, 0.1)   # smaller region
        img[:, 16:] = (0.1, 0.1, 0.9)   # largest region (right 3/4)
        partial = make_partial(self.plan, remove_semantic(0), img, seed=0)
        removed = [s for s in self.plan.strokes if s not in partial.strokes]
        assert removed
        for stroke in removed:
            assert stroke.midpoint()[0] >= 16 / 64

    def test_empty_plan_only_remove_all(self):
        empty = self.plan.subset([])
        assert len(make_partial(empty, remove_all(), self.img, seed=0)) == 0
        with pytest.raises(ValueError):
            make_partial(empty, remove_random(0.5), self.img, seed=0)

    def test_subset_law_all_strategies(self):
        for strat in (remove_random(0.3), remove_salient(), remove_semantic()):
            partial = make_partial(self.plan, strat, self.img, seed=5)
            indices = [self.plan.strokes.index(s) for s in partial.strokes]
            assert indices == sorted(indices)
            assert set(partial.strokes) <= set(self.plan.strokes)


class TestFilterPair:
    def test_identical_kept_at_half_threshold(self):
        img = detailed_source_image(64)
        canvas = Canvas.blank(64, 64)
        canvas.pixels[:] = img
        source = SourceItem(id="s", image=img, caption="x")
        result = filter_pair(canvas, source, threshold=0.5)
        assert result.keep
        assert result.score == pytest.approx(1.0, abs=1e-9)

    def test_threshold_above_one_discards_everything(self):
        img = detailed_source_image(64)
        canvas = Canvas.blank(64, 64)
        canvas.pixels[:] = img
        source = SourceItem(id="s", image=img, caption="x")
        assert not filter_pair(canvas, source, threshold=1.1).keep

    def test_blank_vs_detailed_discarded(self):
        source = SourceItem(id="s", image=detailed_source_image(64), caption="x")
        blank = Canvas.blank(64, 64)
        result = filter_pair(blank, source, threshold=0.5)
        assert not result.keep
        assert result.score < 0.5

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(0)
        pairs = []
        for i in range(20):
            img = rng.random((32, 32, 3))
            canvas = Canvas.blank(32, 32)
            mix = i / 19.0
            canvas.pixels[:] = mix * img + (1 - mix)
            pairs.append((canvas, SourceItem(id=str(i), image=img, caption="")))
        kept_counts = []
        for threshold in (0.0, 0.25, 0.5, 0.75, 1.0, 1.1):
            kept_counts.append(sum(filter_pair(c, s, threshold=threshold).keep
                                   for c, s in pairs))
        assert kept_counts == sorted(kept_counts, reverse=True)

    def test_provider_failure_marks_undecided(self):
        from copaint.dataset import TextImageScorer

        scorer = TextImageScorer("http://127.0.0.1:9/score", timeout=0.3)
        source = SourceItem(id="s", image=detailed_source_image(32), caption="x")
        result = filter_pair(Canvas.blank(32, 32), source, provider=scorer)
        assert result.undecided
        assert not result.keep
        assert result.score is None


class TestSimulateFull:
    def test_white_source_near_empty_marker_plan(self):
        source = SourceItem(id="w", image=np.ones((48, 48, 3)), caption="")
        plan, canvas = simulate_full(source, marker_setting(stroke_budget=10),
                                     FAST, width_px=48, height_px=48)
        assert len(plan) == 0
        assert np.all(canvas.pixels == 1.0)

    def test_self_reconstruction(self):
        setting = marker_setting(stroke_budget=35)
        truth = random_marker_plan(11, 12, setting, max_len=0.3)
        base = Canvas.blank(128, 128)
        src_img = render_plan(truth, base, "robot").pixels
        source = SourceItem(id="recon", image=src_img, caption="strokes")
        cfg = PlannerConfig(seed=3, candidates_per_stroke=96, refine_iters=40)
        plan, canvas = simulate_full(source, setting, cfg, LossConfig(),
                                     width_px=128, height_px=128)
        assert delta_pix(src_img, canvas.pixels) <= 0.02

    def test_plan_carries_derived_palette_for_adaptive(self):
        from copaint.types import acrylic12_setting

        source = SourceItem(id="c", image=detailed_source_image(48), caption="")
        plan, _ = simulate_full(source, acrylic12_setting(stroke_budget=6),
                                FAST, width_px=48, height_px=48)
        assert not plan.setting.palette.fixed
        assert len(plan.setting.palette) <= 12


class TestExportDataset:
    def _pair(self, kept=True, strat=None, sid="s0", score=0.9):
        rng = np.random.default_rng(0)
        return TrainingPair(
            partial_image=rng.random((16, 16, 3)),
            full_image=rng.random((16, 16, 3)),
            caption="a test caption",
            strategy=strat or remove_all(),
            source_id=sid,
            kept=kept,
            score=score,
        )

    def test_zero_kept_writes_empty_manifest(self, tmp_path):
        manifest = export_dataset([self._pair(kept=False)], tmp_path / "ds")
        assert manifest.read_text() == ""
        assert not list((tmp_path / "ds" / "partial").glob("*.png"))

    def test_four_strategies_one_source(self, tmp_path):
        pairs = [self._pair(strat=s) for s in (remove_all(), remove_random(0.5),
                                               remove_salient(), remove_semantic())]
        manifest = export_dataset(pairs, tmp_path / "ds")
        lines = read_manifest(manifest)
        assert len(lines) == 4
        assert sorted(l["strategy"]["kind"] for l in lines) == sorted(
            ["remove_all", "remove_random", "remove_salient", "remove_semantic"])

    def test_round_trip_metadata_exact(self, tmp_path):
        pairs = [self._pair(strat=remove_random(0.3), sid="alpha", score=0.75),
                 self._pair(strat=remove_semantic(2), sid="beta", score=0.6)]
        manifest = export_dataset(pairs, tmp_path / "ds")
        lines = read_manifest(manifest)
        assert lines[0]["source_id"] == "alpha"
        assert lines[0]["caption"] == "a test caption"
        assert lines[0]["strategy"] == {"kind": "remove_random", "fraction": 0.3}
        assert lines[0]["score"] == 0.75
        assert lines[0]["kept"] is True
        assert lines[1]["strategy"] == {"kind": "remove_semantic", "region_index": 2}
        for line in lines:
            assert (tmp_path / "ds" / line["partial_path"]).exists()
            assert (tmp_path / "ds" / line["full_path"]).exists()

    def test_manifest_count_equals_kept_count(self, tmp_path):
        pairs = [self._pair(kept=i % 2 == 0, sid=f"s{i}") for i in range(6)]
        manifest = export_dataset(pairs, tmp_path / "ds")
        assert len(read_manifest(manifest)) == 3

    def test_failure_cleans_partial_writes(self, tmp_path):
        good = self._pair()
        bad = self._pair(sid="bad")
        bad.partial_image = "not an image"  # forces encode failure mid-export
        with pytest.raises(Exception):
            export_dataset([good, bad], tmp_path / "ds")
        assert not (tmp_path / "ds" / "manifest.jsonl").exists()
        assert not list((tmp_path / "ds" / "partial").glob("*.png"))


class TestCorpusAndGenerate:
    def test_load_corpus_skips_undecodable(self, tmp_path, caplog):
        rng = np.random.default_rng(0)
        root = write_corpus(tmp_path / "corpus",
                            {"ok": rng.random((24, 24, 3))})
        (root / "broken.png").write_bytes(b"not a png")
        lines = (root / "captions.jsonl").read_text().splitlines()
        lines.append(json.dumps({"id": "broken", "file": "broken.png",
                                 "caption": "nope"}))
        (root / "captions.jsonl").write_text("\n".join(lines) + "\n")
        items = load_corpus(root)
        assert [item.id for item in items] == ["ok"]

    def test_missing_captions_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_corpus(tmp_path)

    def test_generate_serial_equals_parallel(self, tmp_path):
        rng = np.random.default_rng(1)
        images = {f"img{i}": rng.random((32, 32, 3)) for i in range(3)}
        corpus = write_corpus(tmp_path / "corpus", images)
        setting = marker_setting(stroke_budget=4)
        strategies = [remove_all(), remove_random(0.5)]
        outs = {}
        for label, workers in (("serial", 1), ("parallel", 2)):
            out_dir = tmp_path / label
            generate_dataset(corpus, out_dir, setting, strategies,
                             planner_cfg=FAST, threshold=0.0, seed=7,
                             workers=workers, width_px=32, height_px=32)
            outs[label] = {
                p.relative_to(out_dir): p.read_bytes()
                for p in sorted(out_dir.rglob("*")) if p.is_file()
            }
        assert outs["serial"] == outs["parallel"]

    def test_stable_hash_is_stable(self):
        assert stable_hash64(7, "img0") == stable_hash64(7, "img0")
        assert stable_hash64(7, "img0") != stable_hash64(8, "img0")
        assert stable_hash64(7, "img0") != stable_hash64(7, "img1")
