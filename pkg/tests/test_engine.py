import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpgp.dists import Bernoulli, UniformDiscrete
from gpgp.engine import (
    DIAGNOSTIC_COLUMNS,
    Address,
    ChainConfig,
    ModelSpec,
    accept_proposal,
    addr,
    gibbs_step,
    init_trace,
    mh_step,
    propose_mh,
    read_diagnostics_csv,
    run_chain,
    trace_from_values,
    trace_to_json,
    values_from_json,
)
from gpgp.errors import ConfigError, UsageError
from gpgp.models.text import TextModelConfig, text_model
from models_for_tests import t1_exact_posterior, t1_model, total_variation, toy_model, toy_posterior


# ---------------------------------------------------------------- addresses


def test_address_round_trip_and_order():
    a = Address.parse("glyph[3].pos_x")
    assert a == addr("glyph", 3, "pos_x") and str(a) == "glyph[3].pos_x"
    assert a.name == "pos_x" and a.index == 3
    assert addr("glyph", 2, "pos_x") < addr("glyph", 10, "pos_x")
    assert sorted([addr("global_blur"), addr("data_blur")]) == [addr("data_blur"), addr("global_blur")]
    with pytest.raises(UsageError):
        Address.parse("glyph[x")


@given(st.lists(st.one_of(st.integers(0, 99), st.from_regex(r"[a-z_][a-z0-9_]{0,6}", fullmatch=True)),
                min_size=1, max_size=4).filter(lambda p: isinstance(p[0], str)))
def test_address_parse_inverts_str(path):
    a = Address(tuple(path))
    assert Address.parse(str(a)) == a


# ---------------------------------------------------------------- traces


def test_init_trace_counts_and_determinism():
    cfg = TextModelConfig(200, 100)
    m = text_model(cfg, np.zeros((100, 200)))
    t1 = init_trace(m, np.random.default_rng(4))
    t2 = init_trace(m, np.random.default_rng(4))
    assert len(t1.choices) == 83
    assert t1.values() == t2.values()
    assert t1.loglik == t2.loglik
    assert math.isfinite(t1.loglik)


def test_trace_prior_is_sum_of_records(rng):
    m = toy_model()
    t = init_trace(m, rng)
    assert t.log_prior == pytest.approx(math.fsum(r.log_prior for r in t.choices.values()), abs=1e-12)
    assert t.log_prior == pytest.approx(t.recompute_log_prior(), abs=1e-12)


def test_trace_json_round_trip(rng):
    m = toy_model()
    t = init_trace(m, rng)
    doc = trace_to_json(t, extra={"note": "x"})
    assert values_from_json(doc, m) == t.values()


def test_missing_value_is_usage_error():
    with pytest.raises(UsageError):
        trace_from_values(toy_model(), {addr("k"): 0})


# ---------------------------------------------------------------- MH


def test_mh_full_ratio_equals_shortcut_toy(rng):
    m = toy_model()
    t = init_trace(m, rng)
    for _ in range(300):
        prop = propose_mh(m, t, None, rng)
        assert abs(prop.log_alpha - prop.log_alpha_shortcut) < 1e-10
        t, _, _ = mh_step(m, t, None, rng)


def test_mh_acceptance_probability_examples(rng):
    # ratio above one clamps to one; ratio of one half is accepted half the time
    m = toy_model(weights=(0.0, math.log(2.0)))
    up = trace_from_values(m, {addr("k"): 0, addr("flag"): False, addr("noise"): 0.5})
    down = trace_from_values(m, {addr("k"): 1, addr("flag"): False, addr("noise"): 0.5})
    hits_up = hits_down = n_up = n_down = 0
    for _ in range(4000):
        p = propose_mh(m, up, None, rng)
        if p.address == addr("k") and p.new_value == 1:
            n_up += 1
            hits_up += p.alpha == pytest.approx(1.0)
        p = propose_mh(m, down, None, rng)
        if p.address == addr("k") and p.new_value == 0:
            n_down += 1
            hits_down += p.alpha == pytest.approx(0.5)
    assert n_up > 0 and hits_up == n_up
    assert n_down > 0 and hits_down == n_down


def test_rejection_returns_identical_trace():
    m = toy_model(weights=(0.0, -1e6))
    t = trace_from_values(m, {addr("k"): 0, addr("flag"): False, addr("noise"): 0.0})
    rng = np.random.default_rng(0)
    for _ in range(200):
        new, accepted, a = mh_step(m, t, None, rng)
        if not accepted:
            assert new is t
            assert new.render == t.render and new.loglik == t.loglik


def test_accept_updates_caches(rng):
    m = toy_model()
    t = init_trace(m, rng)
    for _ in range(50):
        p = propose_mh(m, t, None, rng)
        new = accept_proposal(m, t, None, p)
        vals = new.values()
        assert new.render == m.render(vals)
        assert new.loglik == pytest.approx(m.loglik(new.render, None, vals), abs=1e-12)
        assert new.log_prior == pytest.approx(new.recompute_log_prior(), abs=1e-12)


def test_text_model_mh_cancellation_small_sample(rng):
    m = text_model(TextModelConfig(60, 40, max_glyphs=3), rng.random((40, 60)))
    t = init_trace(m, rng)
    for _ in range(100):
        p = propose_mh(m, t, None, rng)
        assert abs(p.log_alpha - p.log_alpha_shortcut) < 1e-10
        t, _, _ = mh_step(m, t, None, rng)


# ---------------------------------------------------------------- Gibbs


def _flag_model(ratio):
    dists = {addr("f"): Bernoulli(0.5)}
    return ModelSpec(dists, lambda v: v[addr("f")], lambda r, d, v: math.log(ratio) if r else 0.0)


def test_gibbs_two_value_frequency():
    # weights (1, 3) normalize to P(value 1) = 0.75
    m = _flag_model(3.0)
    rng = np.random.default_rng(11)
    t = trace_from_values(m, {addr("f"): False})
    ones = sum(gibbs_step(m, t, None, addr("f"), rng)[addr("f")] for _ in range(10_000))
    assert abs(ones / 10_000 - 0.75) < 0.02


def test_gibbs_singleton_support_unchanged(rng):
    m = ModelSpec({addr("s"): UniformDiscrete(4, 4)}, lambda v: 0, lambda r, d, v: 0.0)
    t = trace_from_values(m, {addr("s"): 4})
    assert gibbs_step(m, t, None, addr("s"), rng) is t


def test_gibbs_never_selects_zero_mass_value(rng):
    m = ModelSpec(
        {addr("s"): UniformDiscrete(0, 2)},
        lambda v: v[addr("s")],
        lambda r, d, v: -math.inf if r == 1 else 0.0,
    )
    t = trace_from_values(m, {addr("s"): 0})
    seen = {gibbs_step(m, t, None, addr("s"), rng)[addr("s")] for _ in range(2000)}
    assert seen == {0, 2}


def test_gibbs_on_continuous_address_is_usage_error(rng):
    m = toy_model()
    t = init_trace(m, rng)
    with pytest.raises(UsageError):
        gibbs_step(m, t, None, addr("noise"), rng)
    with pytest.raises(UsageError):
        gibbs_step(m, t, None, addr("nope"), rng)


# ---------------------------------------------------------------- chains


def test_chain_config_validation():
    with pytest.raises(ConfigError):
        ChainConfig(steps=0)
    with pytest.raises(ConfigError):
        ChainConfig(steps=10, gibbs_probability=1.5)
    with pytest.raises(ConfigError):
        ChainConfig(steps=10, record_every=0)


@given(st.integers(1, 200), st.integers(1, 30))
def test_diagnostics_row_count(steps, every):
    _, d = run_chain(toy_model(), None, ChainConfig(steps=steps, record_every=every, seed=1))
    assert len(d) == steps // every


def test_no_gibbs_when_probability_zero():
    _, d = run_chain(toy_model(), None, ChainConfig(steps=500, gibbs_probability=0.0, record_every=1))
    assert set(d.kind) == {"mh"}
    _, d = run_chain(toy_model(), None, ChainConfig(steps=500, gibbs_probability=1.0, record_every=1))
    assert set(d.kind) == {"gibbs"}


def test_chain_determinism(tmp_path):
    cfg = ChainConfig(steps=400, seed=9, record_every=3)
    m = toy_model()
    _, d1 = run_chain(m, None, cfg)
    _, d2 = run_chain(m, None, cfg)
    d1.to_csv(tmp_path / "a.csv")
    d2.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = read_diagnostics_csv(tmp_path / "a.csv")
    assert tuple(rows[0].keys()) == DIAGNOSTIC_COLUMNS


def test_toy_chain_matches_exact_posterior():
    m = toy_model()
    samples, _ = run_chain(m, None, ChainConfig(steps=40_000, seed=2, thin=1))
    c = Counter((t[addr("k")], t[addr("flag")]) for t in samples)
    emp = {s: n / len(samples) for s, n in c.items()}
    assert total_variation(emp, toy_posterior()) < 0.05


def test_reduced_text_model_exact_posterior_short():
    m = t1_model()
    exact = t1_exact_posterior(m)
    samples, _ = run_chain(m, None, ChainConfig(steps=10_000, seed=5, thin=1))
    c = Counter((t["glyph[0].glyph"], t["glyph[0].pos_x"]) for t in samples)
    emp = {s: n / len(samples) for s, n in c.items()}
    assert total_variation(emp, exact) < 0.08


def test_cache_coherence_along_text_chain(rng):
    m = text_model(TextModelConfig(60, 40, max_glyphs=3), rng.random((40, 60)))
    samples, _ = run_chain(m, None, ChainConfig(steps=400, seed=3, thin=7))
    for t in samples:
        vals = t.values()
        r = m.render(vals)
        assert np.abs(r.image - t.render.image).max() < 1e-9
        assert t.loglik == pytest.approx(m.loglik(r, m.data, vals), abs=1e-9)
