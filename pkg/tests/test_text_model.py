import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpgp.dists import log_density
from gpgp.engine import ChainConfig, addr, init_trace, run_chain, trace_from_values
from gpgp.errors import ConfigError, UsageError
from gpgp.models.text import (
    TextModelConfig,
    TextReading,
    decide_text,
    reading_from_render,
    reading_from_values,
    text_model,
)
from gpgp.render2d import GlyphPlacement, render_text_scene

W, H = 120, 50
SCENE = [
    GlyphPlacement(0, 10, 10, 25, 30, 5.0, 0.5),
    GlyphPlacement(27, 40, 12, 20, 30, -8.0, 0.3),
    GlyphPlacement(12, 70, 5, 30, 35, 0.0, 0.8),
]


@pytest.fixture(scope="module")
def scene_data(bank):
    return render_text_scene(bank, SCENE, 0.7, W, H)


@pytest.fixture(scope="module")
def model(scene_data):
    return text_model(TextModelConfig(W, H), scene_data)


def values_for(placements, cfg, global_blur=0.7, data_blur=0.2, eps=0.1):
    vals = {}
    for i in range(cfg.max_glyphs):
        p = placements[i] if i < len(placements) else GlyphPlacement(0, 0, 0, 10, 10, present=False)
        for f, v in (("present", p.present), ("pos_x", p.pos_x), ("pos_y", p.pos_y),
                     ("size_x", p.size_x), ("size_y", p.size_y), ("rotation", p.rotation),
                     ("glyph", p.glyph_id), ("blur", p.blur)):
            vals[addr("glyph", i, f)] = v
    vals[addr("global_blur")] = global_blur
    vals[addr("data_blur")] = data_blur
    vals[addr("epsilon")] = eps
    return vals


def test_address_bank(model):
    assert model.K == 83
    names = {a.name for a in model.addresses if a.index is None}
    assert names == {"global_blur", "data_blur", "epsilon"}
    # presence, two positions, two sizes and the identity of each of 10 slots
    assert len(model.enumerable_addresses) == 60
    assert {a.name for a in model.enumerable_addresses} == {"present", "pos_x", "pos_y", "size_x", "size_y", "glyph"}


def test_priors_follow_the_program(model):
    d = model.dists
    assert d[addr("glyph", 0, "glyph")].support() == tuple(range(36))
    assert d[addr("glyph", 3, "pos_x")].support()[-1] == 200
    assert d[addr("glyph", 3, "size_y")].support()[-1] == 100
    assert d[addr("glyph", 3, "present")].p == 0.5
    assert d[addr("global_blur")].scale == 7 and d[addr("epsilon")].shape == 1


def test_prior_density_is_sum_over_addresses(model):
    rng = np.random.default_rng(0)
    for _ in range(10):
        t = init_trace(model, rng)
        direct = math.fsum(log_density(model.dists[a], v) for a, v in t.values().items())
        assert t.log_prior == pytest.approx(direct, abs=1e-9)
        assert math.isfinite(t.loglik)


def test_dimension_mismatch_is_config_error():
    with pytest.raises(ConfigError):
        text_model(TextModelConfig(W, H), np.zeros((H + 1, W)))


def test_clamp_removes_addresses_and_rejects_unknown():
    cfg = TextModelConfig(20, 20, max_glyphs=1, clamp={"epsilon": 0.5, "glyph[0].present": True})
    m = text_model(cfg, np.zeros((20, 20)))
    assert m.K == 9
    with pytest.raises(ConfigError):
        text_model(TextModelConfig(20, 20, clamp={"glyph[99].pos_x": 1}), np.zeros((20, 20)))
    with pytest.raises(ConfigError):
        TextModelConfig(0, 20)


def test_truth_render_matches_data(model, scene_data):
    cfg = model.meta.cfg
    t = trace_from_values(model, values_for(SCENE, cfg))
    assert np.abs(t.render.image - scene_data).max() < 1e-12


def _check_rescore(model, trace, addresses, rng, n_cont=3, n_enum=25):
    tm = model.meta
    for a in addresses:
        d = model.dists[a]
        if d.enumerable:
            sup = list(d.support())
            vals = sup if len(sup) <= n_enum else [sup[i] for i in rng.choice(len(sup), n_enum, replace=False)]
        else:
            vals = [d.sample(rng) for _ in range(n_cont)]
        for vv in ([vals[0]], vals):
            for v, (ll, thunk) in zip(vv, tm.rescore(trace, model.data, a, vv)):
                vals_full = trace.values()
                vals_full[a] = v
                r = tm.render(vals_full)
                ref = tm.loglik(r, model.data, vals_full)
                assert ll == pytest.approx(ref, rel=1e-9, abs=1e-6), (a, v)
                got = thunk()
                assert np.abs(got.image - r.image).max() < 1e-12, (a, v)
                assert np.array_equal(got.composite, r.composite), (a, v)


def test_rescore_equals_full_render_on_truth(model):
    t = trace_from_values(model, values_for(SCENE, model.meta.cfg))
    rng = np.random.default_rng(1)
    addrs = [a for a in model.addresses if a.index in (None, 0, 1, 2, 5)]
    _check_rescore(model, t, addrs, rng)


def test_rescore_equals_full_render_on_chain_states(model):
    rng = np.random.default_rng(2)
    for seed in range(3):
        s, _ = run_chain(model, None, ChainConfig(steps=150, seed=seed))
        addrs = [model.addresses[i] for i in rng.choice(model.K, 20, replace=False)]
        _check_rescore(model, s[-1], addrs, rng)


@given(
    st.integers(-5, 110), st.integers(-5, 45), st.integers(1, 40), st.floats(0, 3), st.floats(0, 3),
)
def test_rescore_translation_near_edges(model, x, y, size, blur, g):
    cfg = model.meta.cfg
    scene = [GlyphPlacement(3, max(x, 0), max(y, 0), size, size + 5, 0.0, blur), SCENE[2]]
    t = trace_from_values(model, values_for(scene, cfg, global_blur=g))
    rng = np.random.default_rng(0)
    _check_rescore(model, t, [addr("glyph", 0, "pos_x"), addr("glyph", 0, "pos_y")], rng, n_enum=12)


def test_true_identity_is_conditional_argmax(bank):
    # one glyph, near-zero blur: scoring every identity at the true placement
    for g_true in (0, 8, 17, 30):
        p = GlyphPlacement(g_true, 20, 8, 28, 34)
        data = render_text_scene(bank, [p], 0.0, 80, 50)
        cfg = TextModelConfig(80, 50, max_glyphs=1)
        m = text_model(cfg, data)
        t = trace_from_values(m, values_for([p], cfg, global_blur=0.0, data_blur=0.0, eps=0.2))
        scores = [ll for ll, _ in m.meta.rescore(t, data, addr("glyph", 0, "glyph"), list(range(36)))]
        assert int(np.argmax(scores)) == g_true
        assert sorted(scores)[-2] < scores[g_true]


def test_decide_text_rules(model, scene_data):
    cfg = model.meta.cfg
    truth = trace_from_values(model, values_for(SCENE, cfg, data_blur=0.0))
    other = trace_from_values(model, values_for(SCENE[:1], cfg, data_blur=0.0))
    reading, idx = decide_text([other, truth], scene_data)
    assert idx == 1 and reading.text == "A1M"
    assert decide_text([other], scene_data)[1] == 0
    assert decide_text([truth, truth], scene_data)[1] == 0
    with pytest.raises(UsageError):
        decide_text([], scene_data)


def test_reading_order_and_boxes(model):
    cfg = model.meta.cfg
    t = trace_from_values(model, values_for([SCENE[2], SCENE[0], SCENE[1]], cfg))
    r = reading_from_render(t.render)
    assert r.text == "A1M"
    assert r.boxes[0] == (10, 10, 25, 30)
    assert reading_from_values(t.values(), W, H) == r
    assert TextReading.from_json(r.to_json()) == r


def test_reading_skips_invisible_glyphs(model):
    cfg = model.meta.cfg
    scene = [SCENE[0], GlyphPlacement(5, 300, 0, 20, 20), GlyphPlacement(6, 5, 5, 0, 20)]
    vals = values_for(scene, cfg)
    assert reading_from_values(vals, W, H).text == "A"
    t = trace_from_values(model, vals)
    assert reading_from_render(t.render).text == "A"
