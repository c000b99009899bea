"""End-to-end acceptance gate.

One test per shipping criterion; each prints a single PASS/FAIL line with the
measured quantities (run with ``pytest tests/test_acceptance.py -v -s``).
Tolerances are fixed here, not configurable.
"""

import time

import numpy as np
import pytest

from woit.baselines import abuffer_composite, mlab_composite, wboit_composite
from woit.core import DepthBounds, Spectrum3, fragment_channel_absorbance
from woit.curves import extract_curves, wavelet_buffer_for_stream
from woit.metrics import image_rmse
from woit.packing import bytes_per_pixel, pack_buffer, pack_rgb9e5, unpack_buffer, unpack_rgb9e5
from woit.pipeline import RenderConfig, chromatic_gather, bilinear_sample, render_frame, spectral_weight
from woit.scene import cast_fragments, cast_frame, preset
from woit.wavelet import (EPS_Z, TouchCounter, WaveletBuffer, add_interface,
                          evaluate_absorbance, evaluate_visibility, normalize_depth,
                          projection_oracle)

from conftest import make_stream


def _report(num: int, name: str, ok: bool, detail: str = "") -> None:
    print(f"ACCEPTANCE {num:02d} {name}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="module")
def fuzz_corpus():
    """Shared randomized-stream corpus for criteria 1 and 2."""
    rng = np.random.default_rng(20240801)
    t0 = time.perf_counter()
    worst = 0.0
    violations = 0
    streams = 1000
    for _ in range(streams):
        m = int(rng.integers(1, 65))
        rank = int(rng.integers(0, 6))
        zs = rng.uniform(0.0, 1.0, m)
        avals = rng.uniform(0.0, 0.8, m)
        buf = WaveletBuffer.zeros(rank)
        for z, a in zip(zs, avals):
            add_interface(buf, float(z), float(a))
        oracle = projection_oracle(list(zip(zs.tolist(), avals.tolist())), rank)
        worst = max(worst, float(np.abs(buf.coeffs - oracle.coeffs).max()))
        violations += buf.sign_violations()
    return {"streams": streams, "worst": worst, "violations": violations,
            "elapsed": time.perf_counter() - t0}


def test_01_coefficient_correctness(fuzz_corpus):
    worst = fuzz_corpus["worst"]
    dt = fuzz_corpus["elapsed"]
    ok = worst < 1e-4 and dt < 30.0
    _report(1, "coefficient-correctness", ok,
            f"streams={fuzz_corpus['streams']} max|closed-quadrature|={worst:.2e} "
            f"(tol 1e-4) time={dt:.1f}s (limit 30s)")
    assert worst < 1e-4
    assert dt < 30.0


def test_02_sign_theorem(fuzz_corpus):
    bad = fuzz_corpus["violations"]
    _report(2, "sign-theorem", bad == 0,
            f"violations={bad} over {fuzz_corpus['streams']} streams")
    assert bad == 0


def test_03_single_plane_exactness():
    fs, _, _ = cast_fragments(preset("single-plane"), 32, 32, 65, 65)
    worst = 0.0
    checked = 0
    for rank in range(6):
        buf, _ = wavelet_buffer_for_stream(fs, rank)
        m = buf.slots
        packed = unpack_buffer(pack_buffer(buf), rank)
        for storage in (buf, packed):
            for c in range(m):
                if c in (m // 2 - 1, m // 2):
                    continue  # the two cells adjacent to the step
                v = evaluate_visibility(storage, (c + 0.5) / m).as_array()
                expect = 1.0 if c < m // 2 else 0.75
                worst = max(worst, float(np.abs(v - expect).max()))
                checked += 1
    ok = worst <= 1e-3
    _report(3, "single-plane-exactness", ok,
            f"ranks 0-5 packed+unpacked, {checked} cells, max err={worst:.2e} (tol 1e-3)")
    assert worst <= 1e-3


def test_04_order_independence_renders():
    worst = 0.0
    n = 128
    for name in ("glass-stack", "smoke-fire"):
        sc = preset(name)
        frame = cast_frame(sc, n, n)
        cfg = RenderConfig(method="wavelet", rank=3, width=n, height=n, workers=1)
        base = render_frame(sc, cfg, frame=frame)
        for seed in range(10):
            img = render_frame(sc, cfg, frame=frame.shuffled(seed))
            worst = max(worst, image_rmse(img, base))
    ok = worst < 1e-5
    _report(4, "order-independence", ok,
            f"10 shuffles x 2 scenes at {n}x{n}, worst RMSE={worst:.2e} (tol 1e-5)")
    assert worst < 1e-5


def test_05_complexity_accounting():
    details = []
    ok = True
    for rank in range(6):
        c = TouchCounter()
        buf = WaveletBuffer.zeros(rank)
        add_interface(buf, 0.37, 1.0, c)
        evaluate_absorbance(buf, 0.61, c)
        ok &= c.per_insert == rank + 2 and c.per_eval == rank + 2
        words = pack_buffer(buf)
        nbytes = words.size * words.itemsize
        ok &= nbytes == 4 * (1 << (rank + 1)) == bytes_per_pixel(rank)
        details.append(f"N={rank}:{rank + 2}t/{nbytes}B")
    render_counter = TouchCounter()
    render_frame(preset("glass-stack"),
                 RenderConfig(method="wavelet", rank=3, width=64, height=64, workers=1),
                 counter=render_counter)
    ok &= render_counter.per_insert == 5 and render_counter.per_eval == 5
    _report(5, "complexity-accounting", ok,
            " ".join(details) + f" render: {render_counter.per_insert:.0f}/insert "
            f"{render_counter.per_eval:.0f}/eval")
    assert ok


def test_06_packing_roundtrip():
    rng = np.random.default_rng(7)
    v = rng.uniform(0.0, 2.0 ** 16, size=(1_000_000, 3))
    out = unpack_rgb9e5(pack_rgb9e5(v))
    rel = (np.abs(out - v).max(axis=1) / v.max(axis=1)).max()
    exact = unpack_rgb9e5(pack_rgb9e5([0.5, 0.25, 0.125]))
    exact_ok = bool(np.all(exact == np.array([0.5, 0.25, 0.125])))
    ok = rel <= 2.0 ** -9 and exact_ok
    _report(6, "packing-roundtrip", ok,
            f"1e6 triples, max rel err={rel:.2e} (tol {2.0 ** -9:.2e}), "
            f"dyadic triple exact={exact_ok}")
    assert rel <= 2.0 ** -9
    assert exact_ok


def test_07_quality_ordering():
    t0 = time.perf_counter()
    n = 256
    results = {}
    for name in ("glass-stack", "smoke-fire"):
        sc = preset(name)
        frame = cast_frame(sc, n, n)
        base = RenderConfig(method="abuffer", width=n, height=n, workers=1)
        ref = render_frame(sc, base, frame=frame)
        wav = render_frame(sc, RenderConfig(method="wavelet", rank=3, width=n, height=n,
                                            workers=1), frame=frame)
        wbo = render_frame(sc, RenderConfig(method="wboit", width=n, height=n,
                                            workers=1), frame=frame)
        mlb = render_frame(sc, RenderConfig(method="mlab4", width=n, height=n,
                                            workers=1), frame=frame)
        results[name] = (image_rmse(wav, ref), image_rmse(mlb, ref), image_rmse(wbo, ref))
    dt = time.perf_counter() - t0
    gw, gm, gb = results["glass-stack"]
    sw = results["smoke-fire"][0]
    ok = gw < gm and gw < gb and gw < 0.02 and sw < 0.03 and dt < 60.0
    _report(7, "quality-ordering", ok,
            f"glass-stack: wavelet={gw:.4f} < mlab4={gm:.4f}, wboit={gb:.4f}, tol 0.02; "
            f"smoke-fire: wavelet={sw:.4f} (tol 0.03); time={dt:.1f}s (limit 60s)")
    assert gw < gm and gw < gb
    assert gw < 0.02
    assert sw < 0.03
    assert dt < 60.0


def test_08_curve_fidelity():
    ok = True
    details = []
    for name in ("car-fog", "wine-bottle"):
        fs, _, _ = cast_fragments(preset(name), 32, 32, 65, 65)
        buf, bounds = wavelet_buffer_for_stream(fs, 3)
        steps = [f.depth for f in fs if f.ior > 1.0 or f.alpha != 1.0]
        zsteps = [normalize_depth(d, bounds) for d in steps]
        cells = 16
        worst = 0.0
        for channel in ("r", "g", "b"):
            rc = extract_curves(fs, ["wavelet"], 3, 512, channel=channel)
            err = np.abs(rc.methods["wavelet"] - rc.truth)
            keep = np.ones(rc.z.size, dtype=bool)
            for zs in zsteps:
                keep &= np.abs(rc.z - zs) > 1.5 / cells
            worst = max(worst, float(err[keep].max()))
        total = sum((fragment_channel_absorbance(f).as_array() for f in fs), np.zeros(3))
        v_tail = evaluate_visibility(buf, 1.0 - EPS_Z).as_array()
        tail_err = float(np.abs(v_tail - np.exp(-total)).max())
        ok &= worst < 0.05 and tail_err < 1e-3
        details.append(f"{name}: linf={worst:.4f} (tol 0.05) tail={tail_err:.1e} (tol 1e-3)")
    _report(8, "curve-fidelity", ok, "; ".join(details))
    assert ok


def test_09_chromatic_aberration_properties():
    k = 5
    sums_ok = all(
        abs(spectral_weight(i, kk).as_array().sum() - 1.0) < 1e-12
        for kk in (3, 5, 7) for i in range(kk)
    )
    taps_ok = (tuple(spectral_weight(0, k)) == (1.0, 0.0, 0.0)
               and tuple(spectral_weight(k // 2, k)) == (0.0, 1.0, 0.0)
               and tuple(spectral_weight(k - 1, k)) == (0.0, 0.0, 1.0))
    rng = np.random.default_rng(3)
    flat = np.full((16, 16, 3), 0.613)
    px = rng.uniform(0, 15, 64)
    py = rng.uniform(0, 15, 64)
    off = rng.uniform(-4, 4, (64, 2))
    const_ok = bool(np.allclose(chromatic_gather(flat, px, py, off, k), 0.613, atol=1e-12))
    img = rng.uniform(0.0, 1.0, (16, 16, 3))
    zero = np.zeros((64, 2))
    degen_ok = bool(np.array_equal(chromatic_gather(img, px, py, zero, k),
                                   bilinear_sample(img, px, py)))
    ok = sums_ok and taps_ok and const_ok and degen_ok
    _report(9, "chromatic-aberration", ok,
            f"weight sums=1:{sums_ok} end/center taps pure:{taps_ok} "
            f"constant bg exact:{const_ok} zero offset bit-exact:{degen_ok}")
    assert ok


def test_10_baseline_sanity():
    rng = np.random.default_rng(99)
    bg = Spectrum3(0.9, 0.5, 0.15)
    worst_mlab = 0.0
    for _ in range(1000):
        fs = make_stream(rng, int(rng.integers(0, 5)))
        d = np.abs(mlab_composite(fs, bg, 4).as_array()
                   - abuffer_composite(fs, bg).as_array())
        worst_mlab = max(worst_mlab, float(d.max()))

    worst_all = 0.0
    for _ in range(200):
        # pure-coverage fragments: the one case where the weighted-average
        # family coincides with exact compositing for a single layer
        fs = make_stream(rng, 1, coverage_only=True)
        ref = abuffer_composite(fs, bg).as_array()
        bounds = DepthBounds(fs[0].depth, fs[0].depth)
        cand = [wboit_composite(fs, bg, bounds).as_array(),
                mlab_composite(fs, bg, 4).as_array(),
                _wavelet_pixel_composite(fs, bg)]
        worst_all = max(worst_all, float(max(np.abs(c - ref).max() for c in cand)))
    ok = worst_mlab <= 1e-6 and worst_all <= 1e-4
    _report(10, "baseline-sanity", ok,
            f"mlab4 vs oracle (<=4 frags): {worst_mlab:.1e} (tol 1e-6); "
            f"single-fragment 4-method spread: {worst_all:.1e} (tol 1e-4)")
    assert worst_mlab <= 1e-6
    assert worst_all <= 1e-4


def _wavelet_pixel_composite(fs, bg, rank=3):
    """Single-pixel version of the normalized wavelet compositing path."""
    from woit.core import net_transmittance

    buf, bounds = wavelet_buffer_for_stream(fs, rank)
    accum = np.zeros(3)
    weight = np.zeros(3)
    for f in fs:
        vhat = evaluate_visibility(buf, normalize_depth(f.depth, bounds)).as_array()
        accum += f.radiance.as_array() * f.alpha * vhat
        weight += (1.0 - net_transmittance(f)) * vhat
    v_total = evaluate_visibility(buf, 1.0 - EPS_Z).as_array()
    avg = accum / np.maximum(1e-6, weight)
    return avg * (1.0 - v_total) + bg.as_array() * v_total
