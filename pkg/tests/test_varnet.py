import json
import os

import numpy as np
import pytest

from athv import varnet as V
from athv import fourier as F
from athv import data as D
from athv.tensor import Tensor
from athv.networks import build_model
from athv.masks import cartesian_mask

from helpers import tiny_config, tiny_acquisition, zero_final_layers

GOLDENS = json.load(open(os.path.join(os.path.dirname(__file__), "goldens.json")))


def consistent_kspace(seed=0, size=32, coils=2):
    image = D.make_phantom(D.PhantomSpec(size=size, n_ellipses=5, seed=seed))
    smaps = D.make_coil_maps(coils, size, size)
    k = D.simulate_acquisition(image, smaps, noise_sigma=0.0)
    return image, Tensor(smaps), Tensor(k)


# -- refinement term ---------------------------------------------------------


def test_refinement_zero_cnn_gives_zero():
    _, smaps, k = consistent_kspace()
    zero = lambda img: img * 0.0
    g = V.refinement_term(k, smaps, zero)
    assert np.allclose(g.data, 0.0, atol=1e-12)


def test_refinement_identity_cnn_reproduces_consistent_kspace():
    _, smaps, k = consistent_kspace()
    g = V.refinement_term(k, smaps, lambda img: img)
    assert np.max(np.abs(g.data - k.data)) <= 1e-5


def test_refinement_preserves_shape():
    _, smaps, k = consistent_kspace(coils=3)
    g = V.refinement_term(k, smaps, lambda img: img * 0.5)
    assert g.shape == k.shape


# -- unrolled loop -----------------------------------------------------------


def test_e2e_sampled_entries_are_fixed_points_with_zero_cnns():
    image, smaps, k_full, mask, k_masked = tiny_acquisition(coils=2, accel=2)
    m = build_model(tiny_config("e2e-varnet", coils=2, cascades=3), seed=1)
    zero_final_layers(m, [f"cascade{t}.cnn." for t in range(3)])
    out = V.forward_e2e_varnet(m, k_masked, mask)
    sampled = mask.pattern == 1
    assert np.array_equal(out.k_final.data[..., sampled], k_masked.data[..., sampled])


def test_e2e_zero_cascades_is_zero_filled_coil_combined():
    image, smaps, k_full, mask, k_masked = tiny_acquisition(coils=2)
    m = build_model(tiny_config("e2e-varnet", coils=2, cascades=0), seed=2)
    out = V.forward_e2e_varnet(m, k_masked, mask)
    S = V.sens_estimate(k_masked, mask, m.config.sens_unet, m.params, "sens.")
    expect = F.magnitude(F.reduce(F.ifft2c(k_masked), S))
    assert np.array_equal(out.intermediate.data, expect.data[0])
    assert np.array_equal(out.final.data, out.intermediate.data)


def test_e2e_fully_sampled_zero_cnns_recovers_ground_truth():
    size = 32
    image = D.make_phantom(D.PhantomSpec(size=size, n_ellipses=5, seed=4))
    smaps = np.zeros((1, 2, size, size), dtype=np.float32)
    smaps[0, 0] = 1.0
    k = Tensor(D.simulate_acquisition(image, smaps, noise_sigma=0.0))
    mask = cartesian_mask(size, size, accel=1, center_fraction=0.25, kind="random", seed=0)
    m = build_model(tiny_config("e2e-varnet", coils=1, cascades=2), seed=3)
    zero_final_layers(m, ["cascade0.cnn.", "cascade1.cnn."])
    out = V.forward_e2e_varnet(m, F.apply_mask(k, mask), mask)
    assert np.max(np.abs(out.intermediate.data - image)) <= 1e-5


def test_outputs_finite_and_nonnegative():
    image, smaps, k_full, mask, k_masked = tiny_acquisition(coils=2)
    for arch in ("e2e-varnet", "atthybrid-varnet"):
        m = build_model(tiny_config(arch, coils=2), seed=5)
        out = V.run_model(m, k_masked, mask)
        for img in (out.intermediate.data, out.final.data):
            assert np.all(np.isfinite(img))
            assert np.all(img >= 0)
        assert out.intermediate.shape == (32, 32)
        assert out.final.shape == (32, 32)


# -- hybrid ------------------------------------------------------------------


def test_atthybrid_zero_refinement_final_equals_intermediate():
    image, smaps, k_full, mask, k_masked = tiny_acquisition(coils=2)
    m = build_model(tiny_config("atthybrid-varnet", coils=2), seed=6)
    zero_final_layers(m, ["refine."])
    out = V.forward_atthybrid(m, k_masked, mask)
    assert np.array_equal(out.final.data, out.intermediate.data)


def test_atthybrid_without_attention_and_refinement_matches_e2e_bitwise():
    image, smaps, k_full, mask, k_masked = tiny_acquisition(coils=2)
    cfg_e2e = tiny_config("e2e-varnet", coils=2)
    cfg_hyb = tiny_config("atthybrid-varnet", coils=2, attention=False)
    e2e = build_model(cfg_e2e, seed=7)
    hyb = build_model(cfg_hyb, seed=8)
    # share every parameter the two architectures have in common
    for key, t in e2e.params.items():
        hyb.params[key].data[...] = t.data
    out_e2e = V.forward_e2e_varnet(e2e, k_masked, mask)
    out_hyb = V.forward_atthybrid(hyb, k_masked, mask)
    assert np.array_equal(out_hyb.intermediate.data, out_e2e.intermediate.data)
    assert np.array_equal(out_hyb.k_final.data, out_e2e.k_final.data)


def test_gradients_reach_every_group():
    image, smaps, k_full, mask, k_masked = tiny_acquisition(coils=2)
    for arch in ("unet", "wnet", "e2e-varnet", "atthybrid-varnet"):
        m = build_model(tiny_config(arch, coils=2), seed=9)
        out = V.run_model(m, k_masked, mask)
        (out.final * out.final).sum().backward()
        grads_by_group = {}
        for key, t in m.params.items():
            head = key.split(".", 1)[0]
            g = 0.0 if t.grad is None else float(np.abs(t.grad).max())
            grads_by_group[head] = max(grads_by_group.get(head, 0.0), g)
        for head, g in grads_by_group.items():
            assert g > 0, f"{arch}: group {head} received no gradient"


def test_run_model_zero_filled_matches_rss():
    image, smaps, k_full, mask, k_masked = tiny_acquisition(coils=2)
    zf = V.zero_filled(k_masked)
    expect = F.rss(F.ifft2c(k_masked))
    assert np.array_equal(zf.data, expect.data[0])


def test_atthybrid_golden_regression():
    image, smaps, k_full, mask, k_masked = tiny_acquisition(
        size=32, coils=2, accel=2, cf=0.25, phantom_seed=3, mask_seed=5)
    m = build_model(tiny_config("atthybrid-varnet", coils=2), seed=11)
    out = V.forward_atthybrid(m, k_masked, mask)
    ref = GOLDENS["atthybrid_forward_seed11"]
    flat = out.final.data.ravel()
    assert abs(float(out.final.data.mean()) - ref["mean"]) < 1e-6
    assert abs(float(out.final.data.std()) - ref["std"]) < 1e-6
    for idx, val in zip(ref["indices"], ref["values"]):
        assert abs(float(flat[idx]) - val) < 1e-6
