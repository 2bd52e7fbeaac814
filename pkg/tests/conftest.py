"""Shared test helpers: independent oracles and instance generators.

The oracles here deliberately re-derive results from first principles
(dense joint Gaussians, brute-force enumeration, plain loops) so they stay
independent of the library code paths they check.
"""

import math

import numpy as np

from blendnav.gp import KernelParams, TimedObservation

# The conditioning contract always regularizes the Gram diagonal by this
# fraction of the signal variance (first rung of the recovery ladder), so
# the oracle models the same Gram.
BASE_JITTER = 1e-10


def se_cov(params: KernelParams, a, b) -> float:
    return params.signal_variance * math.exp(-((a - b) ** 2)
                                             / (2.0 * params.length_scale ** 2))


def dense_joint_conditioning(params: KernelParams, obs_times, obs_values,
                             obs_noises, query_times):
    """Block conditioning of the dense joint Gaussian over obs + query points.

    Plain loops and a single linear solve; returns (mean (M, D), cov (M, M)).
    """
    obs_times = list(obs_times)
    query_times = list(query_times)
    n, m = len(obs_times), len(query_times)
    pts = obs_times + query_times
    joint = np.zeros((n + m, n + m))
    for i in range(n + m):
        for j in range(n + m):
            joint[i, j] = se_cov(params, pts[i], pts[j])
    kqq = joint[n:, n:]
    values = np.asarray(obs_values, dtype=float)
    if n == 0:
        return np.zeros((m, values.shape[1] if values.ndim == 2 else 1)), kqq
    kxx = joint[:n, :n] + np.diag(np.asarray(obs_noises, dtype=float)) \
        + BASE_JITTER * params.signal_variance * np.eye(n)
    kxq = joint[:n, n:]
    solve = np.linalg.solve(kxx, np.column_stack([values, kxq]))
    alpha, w = solve[:, :values.shape[1]], solve[:, values.shape[1]:]
    mean = kxq.T @ alpha
    cov = kqq - kxq.T @ w
    return mean, cov


def dense_log_density(mean, cov, x) -> float:
    """Multivariate normal log-density via slogdet, one dimension at a time."""
    dev = np.asarray(x, dtype=float) - np.asarray(mean, dtype=float)
    n = len(dev)
    sign, logdet = np.linalg.slogdet(cov)
    assert sign > 0
    quad = float(dev @ np.linalg.solve(cov, dev))
    return -0.5 * (quad + logdet + n * math.log(2.0 * math.pi))


def random_observations(rng, count, dim, t_lo=-3.0, t_hi=3.0, source="s",
                        scale=1.0):
    times = np.sort(rng.uniform(t_lo, t_hi, size=count))
    # keep conditioning times apart so no ladder escalation kicks in
    for i in range(1, count):
        if times[i] - times[i - 1] < 1e-3:
            times[i] = times[i - 1] + 1e-3
    return [TimedObservation(timestamp=float(t), source=source, sequence=i,
                             receive_time=float(t),
                             value=tuple(rng.normal(0.0, scale, size=dim)))
            for i, t in enumerate(times)]
