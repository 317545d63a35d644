"""Release gate: exact numeric properties plus directional experiment trends.

Each test prints one PASS/FAIL line (run with `pytest -s` to see them all)
and then asserts. Criteria 1-7 are oracle checks with independent
recomputation (finite differences, brute-force enumeration, grid search);
criteria 8-13 pin the trend experiments to paired seeds 0-4.
"""

import itertools
import math
import time

import numpy as np
from scipy import stats

from fedarmor import rng
from fedarmor.attacks import craft_set, fgsm, fgsm_spec, pgd, pgd_spec
from fedarmor.cli import cmd_run
from fedarmor.config import EPSILON_PRESETS, FRACTION_PRESET, parse_dict
from fedarmor.federation import fed_avg, retraining_risk, run_experiment, server_adapt
from fedarmor.nn import (
    Dataset,
    grad_input,
    grad_params,
    init_params,
    loss,
    per_example_loss,
)
from fedarmor.privacy import (
    NoiseChannel,
    clip_params,
    default_noise_multiplier,
    gaussian_perturb,
    noise_scale,
    uplink_sensitivity,
)

SEEDS = (0, 1, 2, 3, 4)

_cache: dict = {}


def run_point(seed, **dotted):
    """Memoized default-config experiment with dotted-path overrides."""
    key = (seed, tuple(sorted(dotted.items())))
    if key not in _cache:
        cfg = parse_dict({"seed": seed})
        if dotted:
            cfg = cfg.with_updates(**dotted)
        _cache[key] = run_experiment(cfg)
    return _cache[key]


def verdict(number, name, ok, detail):
    print(f"[criterion {number:02d}] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    return ok


def seed_means(metric, points, **base):
    out = []
    for path, value in points:
        reports = [run_point(s, **{**base, path: value}) for s in SEEDS]
        out.append(float(np.mean([metric(r) for r in reports])))
    return out


def drops(values):
    """Sizes of adjacent decreases (for non-decreasing trend checks)."""
    return [values[i] - values[i + 1] for i in range(len(values) - 1) if values[i + 1] < values[i]]


def rises(values):
    """Sizes of adjacent increases (for non-increasing trend checks)."""
    return [values[i + 1] - values[i] for i in range(len(values) - 1) if values[i + 1] > values[i]]


# --------------------------------------------------------------- criteria


def hidden_kink_margin(model, features):
    """Smallest |pre-activation| over hidden layers: the distance to the
    nearest rectifier kink, where finite differences stop being valid."""
    margin = np.inf
    h = features
    for w, b in model.layers[:-1]:
        z = h @ w.T + b
        margin = min(margin, float(np.min(np.abs(z))))
        h = np.maximum(z, 0.0)
    return margin


def test_criterion_01_gradient_exactness():
    start = time.perf_counter()
    g = rng.stream(8101, "arch")
    worst = 0.0
    h = 1e-5
    checked = 0
    while checked < 100:
        sizes = [int(g.integers(2, 7))]
        for _ in range(int(g.integers(0, 3))):
            sizes.append(int(g.integers(2, 9)))
        sizes.append(int(g.integers(2, 5)))
        model = init_params(sizes, g)
        n = int(g.integers(1, 9))
        data = Dataset(
            g.standard_normal((n, sizes[0])), g.integers(0, sizes[-1], size=n), sizes[-1]
        )
        # Central differences straddle rectifier kinks, so only smooth
        # neighborhoods are admissible for the oracle comparison.
        if hidden_kink_margin(model, data.features) < 1e-3:
            continue
        checked += 1

        analytic = grad_params(model, data)
        theta = model.flatten()
        fd = np.empty_like(theta)
        for j in range(theta.size):
            up, dn = theta.copy(), theta.copy()
            up[j] += h
            dn[j] -= h
            fd[j] = (loss(model.unflatten(up), data) - loss(model.unflatten(dn), data)) / (2 * h)
        worst = max(worst, np.linalg.norm(fd - analytic) / max(1.0, np.linalg.norm(analytic)))

        x, y = data.features[0], int(data.labels[0])
        gi = grad_input(model, x, y)
        fdx = np.empty_like(x)
        for j in range(x.size):
            up, dn = x.copy(), x.copy()
            up[j] += h
            dn[j] -= h
            fdx[j] = (
                per_example_loss(model, Dataset([up], [y], sizes[-1]))[0]
                - per_example_loss(model, Dataset([dn], [y], sizes[-1]))[0]
            ) / (2 * h)
        worst = max(worst, np.linalg.norm(fdx - gi) / max(1.0, np.linalg.norm(gi)))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-5 and elapsed < 60.0
    assert verdict(
        1, "gradient exactness", ok, f"{checked} pairs, max rel err {worst:.2e}, {elapsed:.1f}s"
    )


def test_criterion_02_attack_invariants():
    start = time.perf_counter()
    g = rng.stream(8202, "attacks")

    # Dyadic inputs and a power-of-two budget keep x +/- eps exactly
    # representable, so the moved distance equals the budget bitwise.
    exact_ok = True
    net = init_params([5, 7, 3], g)
    spec = fgsm_spec(0.0625)
    for _ in range(500):
        x = g.integers(-127, 128, size=5) / 16.0
        out = fgsm(net, x, int(g.integers(0, 3)), spec)
        moved = np.abs(out - x)
        if moved.any():
            exact_ok = exact_ok and float(moved.max()) == 0.0625
        exact_ok = exact_ok and np.all((moved == 0.0) | (moved == 0.0625))

    ball_ok = True
    pspec = pgd_spec(0.1, steps=10, clamp_lo=-1.0, clamp_hi=1.0)
    for _ in range(1000):
        x = g.uniform(-1.0, 1.0, size=5)
        out = pgd(net, x, int(g.integers(0, 3)), pspec)
        ball_ok = ball_ok and float(np.max(np.abs(out - x))) <= 0.1 + 1e-12
        ball_ok = ball_ok and np.all(out >= -1.0) and np.all(out <= 1.0)

    bit_ok = True
    for _ in range(100):
        x = g.standard_normal(5)
        y = int(g.integers(0, 3))
        a = pgd(net, x, y, pgd_spec(0.07, steps=1, alpha=0.07))
        b = fgsm(net, x, y, fgsm_spec(0.07))
        bit_ok = bit_ok and np.array_equal(a, b)

    elapsed = time.perf_counter() - start
    ok = exact_ok and ball_ok and bit_ok and elapsed < 30.0
    assert verdict(
        2,
        "attack invariants",
        ok,
        f"budget exact {exact_ok}, ball {ball_ok}, single-step == fgsm {bit_ok}, {elapsed:.1f}s",
    )


def test_criterion_03_privacy_arithmetic():
    worst = 0.0
    count = 0
    for c_bound in (0.5, 1.0, 2.0, 5.0, 10.0):
        for m in (1, 2, 10, 100, 160):
            got = uplink_sensitivity(c_bound, m)
            want = 2.0 * c_bound / m
            worst = max(worst, abs(got - want) / max(1.0, abs(want)))
            count += 1
    for mult in (1.0, 2.0, default_noise_multiplier(1e-5)):
        for exposures in (1, 2, 3):
            for sens in (0.02, 0.125, 1.0):
                for eps in (0.01, 0.5, 9.0):
                    got = noise_scale(mult, exposures, sens, eps)
                    want = mult * exposures * sens / eps
                    worst = max(worst, abs(got - want) / max(1.0, abs(want)))
                    count += 1

    g = rng.stream(8303, "clip")
    clip_ok = True
    for _ in range(10_000):
        w = g.standard_normal(int(g.integers(1, 50))) * g.uniform(0.1, 100.0)
        clip_ok = clip_ok and float(np.linalg.norm(clip_params(w, 3.0))) <= 3.0 + 1e-12
    ok = worst <= 1e-12 and clip_ok and count >= 100
    assert verdict(
        3, "privacy arithmetic", ok, f"{count} tuples, max rel err {worst:.1e}, clip ok {clip_ok}"
    )


def test_criterion_04_sensitivity_oracle():
    # The local trainer is replaced by its per-sample averaging form: each
    # of the m=4 examples contributes the clipped grid-search minimizer of
    # its own one-parameter logistic loss, so neighboring datasets differ
    # in exactly one clipped term and the release moves by at most 2C/m.
    start = time.perf_counter()
    c_bound = 2.0
    grid = np.arange(-5.0, 5.0 + 1e-9, 1e-3)
    domain = [(x, y) for x in (-1.0, -0.5, 0.5, 1.0) for y in (0, 1)]

    def per_sample_solution(x, y):
        margins = grid * x
        losses = np.logaddexp(0.0, -margins) if y == 1 else np.logaddexp(0.0, margins)
        return float(grid[np.argmin(losses)])

    clipped = [
        float(clip_params(np.array([per_sample_solution(x, y)]), c_bound)[0]) for x, y in domain
    ]
    bound = uplink_sensitivity(c_bound, 4)
    worst = 0.0
    for combo in itertools.product(range(8), repeat=4):
        s = math.fsum(clipped[i] for i in combo) / 4.0
        for pos in range(4):
            for alt in range(8):
                if alt == combo[pos]:
                    continue
                s_alt = math.fsum(
                    clipped[alt] if j == pos else clipped[i] for j, i in enumerate(combo)
                ) / 4.0
                worst = max(worst, abs(s - s_alt))
    elapsed = time.perf_counter() - start
    ok = worst <= bound + 1e-9 and elapsed < 120.0
    assert verdict(
        4, "sensitivity oracle", ok, f"worst {worst:.9f} <= 2C/m {bound:.9f}, {elapsed:.1f}s"
    )


def test_criterion_05_noise_calibration():
    sigma = 1.3
    draws = gaussian_perturb(np.zeros(100_000), NoiseChannel(sigma, rng.stream(8505, "noise")))
    std_err = abs(float(np.std(draws)) - sigma) / sigma
    ks = float(stats.kstest(draws / sigma, "norm").statistic)
    ok = std_err < 0.02 and ks < 0.02
    assert verdict(5, "noise calibration", ok, f"std err {std_err:.4f}, KS {ks:.4f}")


def test_criterion_06_fedavg_exactness():
    g = rng.stream(8606, "avg")
    recompute_ok = True
    perm_ok = True
    for _ in range(10):
        k = int(g.integers(2, 6))
        models = [init_params([4, 6, 3], g) for _ in range(k)]
        raw = g.uniform(0.1, 1.0, size=k)
        weights = [float(w) for w in raw / math.fsum(raw)]
        merged = fed_avg(models, weights).flatten()
        want = sum(p * m.flatten() for p, m in zip(weights, models))
        recompute_ok = recompute_ok and float(np.max(np.abs(merged - want))) < 1e-12
        perm = g.permutation(k)
        shuffled = fed_avg([models[i] for i in perm], [weights[i] for i in perm]).flatten()
        perm_ok = perm_ok and np.array_equal(shuffled, merged)
    ok = recompute_ok and perm_ok
    assert verdict(
        6, "fedavg exactness", ok, f"recompute 1e-12 {recompute_ok}, permutation bit-exact {perm_ok}"
    )


def test_criterion_07_risk_inequality():
    # One-parameter linear instance: a single affine layer on sign-symmetric
    # one-dimensional data keeps the bias difference at zero under full-batch
    # training, so the model is the margin family beta * x. The crafted-pool
    # risk of the final adaptation iterate must sit above the brute-force
    # grid minimum of clean-plus-worst-ball loss, because the single-step
    # attack is the exact ball maximizer for a linear margin.
    start = time.perf_counter()
    pool = Dataset([[1.0], [0.5], [-1.0], [-0.5]], [1, 1, 0, 0], 2)
    eta = 0.8
    spec = fgsm_spec(eta)
    model = init_params([1, 2], rng.stream(70, "init"))
    final = server_adapt(model, pool, spec, 1.0, 5, 0.05, 8, rng.stream(70, "adapt"))
    twins = craft_set(final, pool, spec)
    risk_final = retraining_risk(final, pool, twins)

    grid = np.arange(-5.0, 5.0 + 1e-9, 1e-3)
    xs = pool.features[:, 0]
    ys = pool.labels

    def ell(margin, y):
        return np.where(y == 1, np.logaddexp(0.0, -margin), np.logaddexp(0.0, margin))

    clean = ell(grid[:, None] * xs[None, :], ys[None, :]).sum(axis=1)
    lo = ell(grid[:, None] * (xs - eta)[None, :], ys[None, :])
    hi = ell(grid[:, None] * (xs + eta)[None, :], ys[None, :])
    grid_min = float((clean + np.maximum(lo, hi).sum(axis=1)).min())

    elapsed = time.perf_counter() - start
    ok = risk_final >= grid_min - 1e-9 and elapsed < 60.0
    assert verdict(
        7,
        "risk inequality",
        ok,
        f"final risk {risk_final:.6f} >= grid min {grid_min:.6f}, {elapsed:.1f}s",
    )


def test_criterion_08_budget_monotonicity():
    means = seed_means(
        lambda r: r.asr_avg, [("attack.epsilon", e) for e in EPSILON_PRESETS["fine"]]
    )
    bad = drops(means)
    ok = len(bad) <= 1 and all(d <= 0.02 for d in bad)
    assert verdict(
        8, "budget monotonicity", ok, "asr_avg means " + str([round(m, 4) for m in means])
    )


def test_criterion_09_defense_efficacy():
    base = seed_means(lambda r: r.asr_avg, [("attack.epsilon", 0.05)])[0]
    defended = seed_means(
        lambda r: r.asr_avg,
        [("defense", "distributed-noise")],
        **{"attack.epsilon": 0.05},
    )[0]
    ok = base > 0.2 and defended <= 0.7 * base
    cut = (base - defended) / base if base else 0.0
    assert verdict(
        9, "defense efficacy", ok, f"baseline {base:.4f}, defended {defended:.4f}, cut {cut:.1%}"
    )


def test_criterion_10_self_vs_avg_ordering():
    ok = True
    extremes = []
    for defense in ("adversarial-training", "distributed-noise"):
        for s in SEEDS:
            r = run_point(s, **{"attack.epsilon": 0.05, "defense": defense})
            ok = ok and r.asr_self >= r.asr_avg
            extremes.append(r.asr_self - r.asr_avg)
    assert verdict(
        10,
        "self vs avg ordering",
        ok,
        f"min gap {min(extremes):.4f} over {len(extremes)} defended runs",
    )


def test_criterion_11_fraction_trend():
    means = seed_means(
        lambda r: r.asr_avg,
        [("federation.adaptation_fraction", f) for f in FRACTION_PRESET],
        defense="adversarial-training",
    )
    bad = rises(means)
    ok = means[-1] <= means[0] - 0.05 and len(bad) <= 1 and all(d <= 0.02 for d in bad)
    assert verdict(
        11, "fraction trend", ok, "asr_avg means " + str([round(m, 4) for m in means])
    )


def test_criterion_12_dp_direction():
    ok = True
    details = []
    degradation = None
    for eps in (0.01, 0.05):
        plain = [run_point(s, **{"attack.epsilon": eps}) for s in SEEDS]
        private = [
            run_point(s, **{"attack.epsilon": eps, "privacy.enabled": True}) for s in SEEDS
        ]
        asr_plain = float(np.mean([r.asr_avg for r in plain]))
        asr_private = float(np.mean([r.asr_avg for r in private]))
        ok = ok and asr_private <= asr_plain
        details.append(f"eps {eps}: {asr_plain:.4f} -> {asr_private:.4f}")
        degradation = float(
            np.mean([np.mean(r.clean_accuracy) for r in plain])
            - np.mean([np.mean(r.clean_accuracy) for r in private])
        )
    ok = ok and degradation <= 0.15
    assert verdict(
        12, "dp direction", ok, "; ".join(details) + f"; clean acc drop {degradation:.4f}"
    )


def test_criterion_13_run_determinism(tmp_path):
    first = parse_dict({"seed": 0}, output_override=str(tmp_path / "a"))
    second = parse_dict({"seed": 0}, output_override=str(tmp_path / "b"))
    assert cmd_run(first) == 0
    assert cmd_run(second) == 0
    bytes_a = (tmp_path / "a" / "report.csv").read_bytes()
    bytes_b = (tmp_path / "b" / "report.csv").read_bytes()
    ok = bytes_a == bytes_b
    assert verdict(13, "run determinism", ok, f"report.csv {len(bytes_a)} bytes, identical {ok}")
