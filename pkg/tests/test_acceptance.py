"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Every stochastic check uses the fixed seed below, chosen before any
acceptance run. Thresholds are pinned as module constants.
"""

import json
import math
import time

import numpy as np
import pytest

from delaymdn import cli, mdn
from delaymdn import arrivals as arr
from delaymdn import dataset as ds
from delaymdn import distributions as dist
from delaymdn import mixture as mx
from delaymdn.analytic import HolPredictor, conditional_mean
from delaymdn.mixture import GaussianMixture
from delaymdn.simulator import SimConfig, erlang_c_oracle, run

SEED = 2019

# criterion 1
MMC_CUSTOMERS = 500_000
MMC_WARMUP = 10_000
MMC_REL_TOL = 0.05
MMC_MAX_SECONDS = 60.0
# criterion 2
LINDLEY_CUSTOMERS = 10_000
LINDLEY_ABS_TOL = 1e-12
# criterion 3
THIN_CYCLES = 10
THIN_BINS = 100
THIN_MIN_OK = 95
THIN_SIGMAS = 3.0
# criterion 4
HOL_REL_TOL = 0.10
HOL_MIN_BUCKET = 500
# criteria 5 and 6
ONOFF_MIN_REDUCTION = 0.50
ONOFF_MAX_SECONDS = 600.0
NHPP_MIN_REDUCTION = 0.60
# criterion 7
GRAD_REL_TOL = 1e-5
GRAD_STEP = 1e-5
GRAD_SAMPLES = 20
# criterion 8
QUANTILE_TOL = 1e-9
N_RANDOM_MIXTURES = 100
MC_DRAWS = 1_000_000
MC_SIGMAS = 3.0
# criteria 9 to 11
MAX_VIOLATION = 0.08
COVERAGE_RANGE = (0.90, 0.98)
MODE_MIN_WEIGHT = 0.2
MODE_MIN_SEPARATION = 2.0

TINY_PIPELINE = {
    "sim": {"n_customers": 4000, "warmup": 500},
    "dataset": {"n_train": 2000, "n_test": 600},
    "model": {"hidden": [8], "train": {"max_epochs": 3}},
}


@pytest.fixture(scope="module")
def mm20():
    cfg = SimConfig(
        c=20,
        arrival=arr.HomogeneousPoisson(19.0),
        service=dist.Exponential(1.0),
        n_customers=MMC_CUSTOMERS,
        warmup=MMC_WARMUP,
        seed=SEED,
    )
    start = time.perf_counter()
    sim = run(cfg)
    return sim, time.perf_counter() - start


def _reproduce(tmp_path_factory, figure):
    out = tmp_path_factory.mktemp(figure)
    start = time.perf_counter()
    code = cli.main(["reproduce", figure, "--seed", str(SEED), "--out", str(out)])
    elapsed = time.perf_counter() - start
    assert code == 0, f"reproduce {figure} exited with {code}"
    report = json.loads((out / "report.json").read_text())
    return out, {r["predictor"]: r for r in report["reports"]}, elapsed


@pytest.fixture(scope="module")
def fig2(tmp_path_factory):
    return _reproduce(tmp_path_factory, "fig2")


@pytest.fixture(scope="module")
def fig3(tmp_path_factory):
    return _reproduce(tmp_path_factory, "fig3")


@pytest.fixture(scope="module")
def fig4(tmp_path_factory):
    return _reproduce(tmp_path_factory, "fig4")


@pytest.fixture(scope="module")
def fig5(tmp_path_factory):
    return _reproduce(tmp_path_factory, "fig5")


def test_c01_mmc_erlang_c(mm20, acceptance_log):
    sim, elapsed = mm20
    w = sim.wait[sim.warmup :]
    p_wait, _, given = erlang_c_oracle(20, 19.0, 1.0)
    emp_given = float(w[w > 0].mean())
    emp_p = float(np.mean(w > 0))
    err_given = abs(emp_given - given) / given
    err_p = abs(emp_p - p_wait) / p_wait
    ok = err_given <= MMC_REL_TOL and err_p <= MMC_REL_TOL and elapsed < MMC_MAX_SECONDS
    detail = (
        f"E[W|W>0]={emp_given:.4f} vs {given:.4f} (rel {err_given:.3f}), "
        f"P(W>0)={emp_p:.4f} vs {p_wait:.4f} (rel {err_p:.3f}), {elapsed:.1f}s"
    )
    assert acceptance_log("C1 simulator vs Erlang-C", ok, detail), detail


def lindley(arrival, service):
    w = np.zeros(len(arrival))
    for n in range(1, len(arrival)):
        w[n] = max(0.0, w[n - 1] + service[n - 1] - (arrival[n] - arrival[n - 1]))
    return w


def test_c02_lindley(acceptance_log):
    laws = {
        "exponential": dist.Exponential(1.0),
        "lognormal": dist.fit_lognormal(1.0, 1.0),
        "h2": dist.fit_h2_balanced(1.0, 2.0),
    }
    errors = {}
    for name, law in laws.items():
        sim = run(SimConfig(c=1, arrival=arr.HomogeneousPoisson(0.8), service=law, n_customers=LINDLEY_CUSTOMERS, warmup=0, seed=SEED))
        errors[name] = float(np.max(np.abs(sim.wait - lindley(sim.arrival_time, sim.service_duration))))
    ok = all(e <= LINDLEY_ABS_TOL for e in errors.values())
    detail = ", ".join(f"{k} max|diff|={v:.1e}" for k, v in errors.items())
    assert acceptance_log("C2 Lindley recurrence", ok, detail), detail


def test_c03_thinning(acceptance_log):
    proc = arr.SinusoidalNHPP(19.0, 0.5, 144.0)
    horizon = THIN_CYCLES * proc.period
    gaps, thin = dist.RandomStream(SEED, dist.ARRIVALS), dist.RandomStream(SEED, dist.THINNING)
    times, t = [], 0.0
    while True:
        t = arr.next_arrival(proc, t, gaps, thin)
        if t > horizon:
            break
        times.append(t)
    edges = np.linspace(0.0, horizon, THIN_BINS + 1)
    counts, _ = np.histogram(times, edges)
    expected = np.array([arr.cumulative_rate(proc, a, b) for a, b in zip(edges, edges[1:])])
    n_ok = int(np.sum(np.abs(counts - expected) <= THIN_SIGMAS * np.sqrt(expected)))
    ok = n_ok >= THIN_MIN_OK
    detail = f"{n_ok}/{THIN_BINS} bins within {THIN_SIGMAS:g} sd, {len(times)} arrivals"
    assert acceptance_log("C3 NHPP thinning", ok, detail), detail


def test_c04_hol_conditional_mean(mm20, acceptance_log):
    sim, _ = mm20
    post = ~sim.is_warmup & (sim.hol > 0)
    hol, wait, t = sim.hol[post], sim.wait[post], sim.arrival_time[post]
    pred = HolPredictor(arr.HomogeneousPoisson(19.0), mu=1.0, c=20)
    predicted = np.array([conditional_mean(pred, ti, hi) for ti, hi in zip(t, hol)])
    edges = np.quantile(hol, np.linspace(0, 1, 11))
    bucket = np.clip(np.searchsorted(edges, hol, side="right") - 1, 0, 9)
    worst, checked = 0.0, 0
    for b in range(10):
        sel = bucket == b
        if sel.sum() < HOL_MIN_BUCKET:
            continue
        checked += 1
        worst = max(worst, abs(wait[sel].mean() - predicted[sel].mean()) / predicted[sel].mean())
    ok = checked > 0 and worst <= HOL_REL_TOL
    detail = f"{checked} deciles with >= {HOL_MIN_BUCKET} samples, worst relative error {worst:.3f}"
    assert acceptance_log("C4 HOL conditional mean", ok, detail), detail


def test_c05_onoff_h1(fig2, acceptance_log):
    _, reports, elapsed = fig2
    red = reports["mse_h1"]["mse_reduction_vs_baseline"]
    ok = red >= ONOFF_MIN_REDUCTION and elapsed < ONOFF_MAX_SECONDS
    detail = f"h=1 reduction vs LES {red:.3f} (need >= {ONOFF_MIN_REDUCTION}), pipeline {elapsed:.0f}s"
    assert acceptance_log("C5 ON-OFF MSE network", ok, detail), detail


def test_c06_nhpp_h50(fig3, acceptance_log):
    _, reports, _ = fig3
    red = reports["mse_h50"]["mse_reduction_vs_baseline"]
    ase50, ase1 = reports["mse_h50"]["ase"], reports["mse_h1"]["ase"]
    ok = red >= NHPP_MIN_REDUCTION and ase50 <= ase1
    detail = f"h=50 reduction vs LES {red:.3f} (need >= {NHPP_MIN_REDUCTION}), ASE h=50 {ase50:.3f} vs h=1 {ase1:.3f}"
    assert acceptance_log("C6 NHPP MSE network", ok, detail), detail


def test_c07_mdn_gradient_check(acceptance_log):
    rng = np.random.default_rng(SEED)
    model = mdn.build(5, 3, (32, 32), 1e-3, rng)
    model.head.bias[:] = rng.normal(0, 0.5, 9)
    x, y = rng.normal(size=(GRAD_SAMPLES, 5)), rng.normal(size=GRAD_SAMPLES)
    _, grads = mdn.mdn_backward(model, x, y)
    worst = 0.0
    for p, g in zip(model.parameters(), grads):
        for i in np.ndindex(p.shape):
            keep = p[i]
            p[i] = keep + GRAD_STEP
            up = mdn.nll_loss(model, x, y)
            p[i] = keep - GRAD_STEP
            down = mdn.nll_loss(model, x, y)
            p[i] = keep
            fd = (up - down) / (2 * GRAD_STEP)
            worst = max(worst, abs(fd - g[i]) / max(abs(fd), abs(g[i]), 1e-7))
    ok = worst < GRAD_REL_TOL
    n_params = sum(p.size for p in model.parameters())
    detail = f"max relative error {worst:.2e} over {n_params} parameters"
    assert acceptance_log("C7 MDN gradient check", ok, detail), detail


def _random_mixture(rng, K):
    w = rng.dirichlet(np.ones(K)) * 0.95 + 0.05 / K
    return GaussianMixture(tuple(w / w.sum()), tuple(rng.normal(0, 5, K)), tuple(rng.uniform(0.1, 3, K)))


def test_c08_mixture_math(acceptance_log):
    rng = np.random.default_rng(SEED)
    ps = np.arange(1, 100) / 100
    worst = 0.0
    for _ in range(N_RANDOM_MIXTURES):
        m = _random_mixture(rng, int(rng.integers(1, 6)))
        worst = max(worst, max(abs(mx.cdf(m, mx.quantile(m, p)) - p) for p in ps))
    mc_ok, z_scores = True, []
    for K in (1, 2, 3):
        m = _random_mixture(rng, K)
        x = mx.sample(m, rng, MC_DRAWS)
        var = mx.variance(m)
        z_mean = abs(x.mean() - mx.mean(m)) / math.sqrt(var / MC_DRAWS)
        fourth = np.mean((x - x.mean()) ** 4)
        z_var = abs(x.var() - var) / math.sqrt((fourth - var**2) / MC_DRAWS)
        z_scores += [z_mean, z_var]
        mc_ok &= z_mean < MC_SIGMAS and z_var < MC_SIGMAS
    ok = worst < QUANTILE_TOL and mc_ok
    detail = f"max |cdf(quantile(p)) - p| = {worst:.1e}, Monte Carlo max z = {max(z_scores):.2f}"
    assert acceptance_log("C8 mixture math", ok, detail), detail


def test_c09_bound_calibration(fig5, acceptance_log):
    _, reports, _ = fig5
    r = reports["mdn_h50"]
    v_ub, v_lb = r["bound_violation_ub"], r["bound_violation_lb"]
    ok = v_ub <= MAX_VIOLATION and v_lb <= MAX_VIOLATION
    detail = f"violation ub {v_ub:.4f}, lb {v_lb:.4f} (need <= {MAX_VIOLATION} each)"
    assert acceptance_log("C9 bound calibration", ok, detail), detail


def test_c10_ci_calibration(fig5, acceptance_log):
    _, reports, _ = fig5
    cov = reports["mdn_h50"]["ci_coverage"]
    lo, hi = COVERAGE_RANGE
    ok = lo <= cov <= hi
    detail = f"95% interval coverage {cov:.4f} (need within [{lo}, {hi}])"
    assert acceptance_log("C10 CI calibration", ok, detail), detail


def test_c11_multimodality(fig4, acceptance_log):
    out, _, _ = fig4
    model = mdn.MdnModel.from_dict(json.loads((out / "model_mdn_h1.json").read_text()))
    test = ds.read_csv(out / "test_h1.csv", h=1)
    pi, mu, sigma = mdn.mixture_params(model, model.standardizer.transform(test.features))
    best, hits = 0.0, 0
    for a in range(model.K):
        for b in range(a + 1, model.K):
            heavy = (pi[:, a] >= MODE_MIN_WEIGHT) & (pi[:, b] >= MODE_MIN_WEIGHT)
            sep = np.abs(mu[:, a] - mu[:, b]) / np.minimum(sigma[:, a], sigma[:, b])
            good = heavy & (sep > MODE_MIN_SEPARATION)
            hits += int(good.sum())
            if heavy.any():
                best = max(best, float(sep[heavy].max()))
    ok = hits > 0
    detail = f"{hits} qualifying (input, pair) cases, best separation {best:.2f} smaller-std units"
    assert acceptance_log("C11 multimodality", ok, detail), detail


def test_c12_determinism(tmp_path, acceptance_log):
    cfg_path = tmp_path / "tiny.json"
    cfg_path.write_text(json.dumps(TINY_PIPELINE))
    mismatched = []
    for figure in cli.FIGURES:
        blobs = []
        for run_id in ("a", "b"):
            out = tmp_path / f"{figure}_{run_id}"
            assert cli.main(["reproduce", figure, "--config", str(cfg_path), "--seed", str(SEED), "--out", str(out)]) == 0
            blobs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        if blobs[0] != blobs[1]:
            mismatched.append(figure)
    ok = not mismatched
    detail = f"{len(cli.FIGURES)} pipelines rerun, byte differences in {mismatched or 'none'}"
    assert acceptance_log("C12 determinism", ok, detail), detail
