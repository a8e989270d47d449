import http.server
import json
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import canvas_from_pixels, detailed_source_image, random_marker_plan
from oracles import pearson_oracle

from copaint.errors import DimensionMismatchError, ProviderError
from copaint.metrics import (
    EMBED_DIM,
    EmbeddingProvider,
    delta_pix,
    delta_sem,
    embed,
    gap_report,
    pearson,
)
from copaint.planner import PlannerConfig, plan_strokes
from copaint.render import render_plan
from copaint.types import Canvas, marker_setting


class TestDeltaPix:
    def test_identity(self):
        img = np.random.default_rng(0).random((16, 16, 3))
        assert delta_pix(img, img) == 0.0

    def test_zeros_vs_ones(self):
        assert delta_pix(np.zeros((8, 8, 3)), np.ones((8, 8, 3))) == 1.0

    def test_half_black_half_white_vs_white(self):
        img = np.ones((8, 8, 3))
        img[:4] = 0.0
        assert delta_pix(img, np.ones((8, 8, 3))) == 0.5

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            delta_pix(np.ones((8, 8, 3)), np.ones((8, 9, 3)))

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_symmetry_and_bounds(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.random((6, 6, 3))
        b = rng.random((6, 6, 3))
        ab = delta_pix(a, b)
        assert ab == delta_pix(b, a)
        assert 0.0 <= ab <= 1.0


class TestEmbed:
    def test_unit_norm_over_random_images(self):
        for seed in range(50):
            img = np.random.default_rng(seed).random((20, 20, 3))
            vec = embed(img)
            assert vec.shape == (EMBED_DIM,)
            assert abs(np.linalg.norm(vec) - 1.0) <= 1e-6

    def test_invariant_to_sub_bin_noise_on_flat_image(self):
        # flat value at a color-bin center (bin width 1/8); noise amplitude
        # below half a bin moves no color count, and the resulting gradients
        # stay below the flatness threshold, so the vectors are identical
        flat = np.full((32, 32, 3), 4.5 / 8.0)
        rng = np.random.default_rng(5)
        noise = (rng.random((32, 32, 3)) - 0.5) * 2 * 0.9 * (1.0 / 16.0)
        assert np.array_equal(embed(flat), embed(flat + noise))

    def test_mirror_breaks_symmetry(self):
        img = np.zeros((32, 32, 3))
        img[:, :8] = 1.0  # bright band on the left only
        mirrored = img[:, ::-1].copy()
        assert not np.array_equal(embed(img), embed(mirrored))

    def test_nonnegative(self):
        img = np.random.default_rng(1).random((16, 16, 3))
        assert np.all(embed(img) >= 0.0)


class TestDeltaSem:
    def test_identity(self):
        img = np.random.default_rng(2).random((16, 16, 3))
        assert delta_sem(img, img) == pytest.approx(0.0, abs=1e-12)

    def test_bounded_by_one_under_builtin(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            a = rng.random((12, 12, 3))
            b = rng.random((12, 12, 3))
            d = delta_sem(a, b)
            assert 0.0 - 1e-12 <= d <= 1.0 + 1e-12
            assert d == pytest.approx(delta_sem(b, a), abs=1e-12)

    def test_blank_vs_detailed_separates(self):
        detailed = detailed_source_image()
        blank = np.ones_like(detailed)
        similarity = 1.0 - delta_sem(blank, detailed)
        assert similarity < 0.5


class TestPearson:
    def test_exact_linearity(self):
        xs = [1.0, 2.0, 3.0, 4.0, 5.0]
        ys = [2 * x + 1 for x in xs]
        r, p = pearson(xs, ys)
        assert r == pytest.approx(1.0, abs=1e-12)
        assert p == pytest.approx(0.0, abs=1e-12)

    def test_constant_input_rejected(self):
        with pytest.raises(ValueError):
            pearson([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])

    def test_short_input_rejected(self):
        with pytest.raises(ValueError):
            pearson([1.0, 2.0], [3.0, 4.0])

    def test_against_quadrature_oracle(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(5, 51))
            xs = rng.normal(size=n)
            ys = 0.4 * xs + rng.normal(scale=rng.uniform(0.2, 2.0), size=n)
            r, p = pearson(xs, ys)
            r_o, p_o = pearson_oracle(xs, ys)
            assert r == pytest.approx(r_o, abs=1e-9)
            assert p == pytest.approx(p_o, abs=1e-9)

    @given(st.integers(0, 10_000), st.floats(0.1, 50.0), st.floats(-10.0, 10.0))
    @settings(max_examples=30, deadline=None)
    def test_scale_invariance(self, seed, a, b):
        rng = np.random.default_rng(seed)
        xs = rng.normal(size=12)
        ys = rng.normal(size=12)
        r1, p1 = pearson(xs, ys)
        r2, p2 = pearson(a * xs + b, ys)
        assert r1 == pytest.approx(r2, abs=1e-12)
        assert p1 == pytest.approx(p2, abs=1e-9)

    def test_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            xs = rng.normal(size=8)
            ys = rng.normal(size=8)
            r, p = pearson(xs, ys)
            assert -1.0 <= r <= 1.0
            assert 0.0 <= p <= 1.0


class TestGapReport:
    def test_identical_pairs_flag_omitted_correlation(self):
        img = np.random.default_rng(0).random((12, 12, 3))
        pairs = [(f"p{i}", img, img) for i in range(4)]
        scores = {f"p{i}": 0.5 + 0.1 * i for i in range(4)}
        report = gap_report(pairs, text_scores=scores)
        assert all(row["delta_pix"] == 0.0 for row in report.rows)
        assert report.correlations["delta_pix_vs_text"] is None
        assert report.notes  # explains the omission

    def test_single_pair_aggregates_equal_row(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((10, 10, 3)), rng.random((10, 10, 3))
        report = gap_report([("only", a, b)])
        assert report.aggregates["delta_pix"]["mean"] == report.rows[0]["delta_pix"]
        assert report.aggregates["delta_sem"]["median"] == report.rows[0]["delta_sem"]

    def test_rows_sorted_by_id(self):
        rng = np.random.default_rng(2)
        imgs = [rng.random((8, 8, 3)) for _ in range(3)]
        report = gap_report([("b", imgs[0], imgs[1]), ("a", imgs[1], imgs[2]),
                             ("c", imgs[0], imgs[2])])
        assert [row["id"] for row in report.rows] == ["a", "b", "c"]

    def test_self_consistent_plans_beat_shuffled_pairs(self):
        # reconstruction study: planned renders must sit semantically closer
        # to their own targets than to other targets (shuffle control)
        setting = marker_setting(stroke_budget=8)
        base = Canvas.blank(48, 48)
        targets, renders = [], []
        for i in range(40):
            truth = random_marker_plan(100 + i, 5, setting, max_len=0.5)
            target = render_plan(truth, base, "robot").pixels
            plan = plan_strokes(target, base, setting,
                                PlannerConfig(seed=i, candidates_per_stroke=16,
                                              refine_iters=3))
            targets.append(target)
            renders.append(render_plan(plan, base, "robot").pixels)
        matched = np.mean([delta_sem(targets[i], renders[i]) for i in range(40)])
        shuffled = np.mean([delta_sem(targets[i], renders[(i + 7) % 40])
                            for i in range(40)])
        assert matched < shuffled


class _EmbeddingHandler(http.server.BaseHTTPRequestHandler):
    mode = "ok"

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        self.rfile.read(length)
        if self.mode == "error":
            self.send_response(500)
            self.end_headers()
            return
        if self.mode == "garbage":
            payload = b"not json"
        else:
            vec = [1.0] * 8  # deliberately unnormalized
            payload = json.dumps({"embedding": vec}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def embedding_server():
    server = http.server.HTTPServer(("127.0.0.1", 0), _EmbeddingHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/embed"
    server.shutdown()


class TestHttpProvider:
    def test_response_renormalized(self, embedding_server):
        _EmbeddingHandler.mode = "ok"
        provider = EmbeddingProvider(kind="http", url=embedding_server)
        vec = embed(np.ones((8, 8, 3)), provider)
        assert abs(np.linalg.norm(vec) - 1.0) <= 1e-9
        assert len(vec) == 8

    def test_http_error_raises_provider_error(self, embedding_server):
        _EmbeddingHandler.mode = "error"
        provider = EmbeddingProvider(kind="http", url=embedding_server)
        with pytest.raises(ProviderError) as exc:
            embed(np.ones((8, 8, 3)), provider)
        assert embedding_server in str(exc.value)

    def test_bad_payload_raises_provider_error(self, embedding_server):
        _EmbeddingHandler.mode = "garbage"
        provider = EmbeddingProvider(kind="http", url=embedding_server)
        with pytest.raises(ProviderError):
            embed(np.ones((8, 8, 3)), provider)

    def test_unreachable_endpoint(self):
        provider = EmbeddingProvider(kind="http", url="http://127.0.0.1:9/none",
                                     timeout=0.5)
        with pytest.raises(ProviderError):
            embed(np.ones((8, 8, 3)), provider)

    def test_bad_kind_rejected(self):
        with pytest.raises(ValueError):
            EmbeddingProvider(kind="magic")
        with pytest.raises(ValueError):
            EmbeddingProvider(kind="http", url="")


def test_gap_report_requires_pairs():
    with pytest.raises(ValueError):
        gap_report([])
