"""Empirical versus MCD covariance when a tenth of the samples are gross outliers."""
import numpy as np

from texcov import covest

rng = np.random.default_rng(1)
true_cov = np.array([[2.0, 0.6, 0.0],
                     [0.6, 1.0, 0.3],
                     [0.0, 0.3, 0.5]])
clean = rng.multivariate_normal(np.zeros(3), true_cov, 270)
outliers = 100 * np.sqrt(2.0) * rng.standard_normal((30, 3))
x = np.vstack([clean, outliers])

ref = np.cov(clean.T)


def error(c):
    return np.linalg.norm(c - ref, 2) / np.linalg.norm(ref, 2)


emp = covest.empirical_covariance(x)
print(f"empirical covariance error: {error(emp):9.2f}")

res = covest.fast_mcd_details(x, covest.McdConfig(alpha=0.9, seed=0))
print(f"MCD covariance error:       {error(res.covariance):9.2f}")
print(f"outliers kept in the h-subset: {np.sum(res.support >= 270)} of 30")

# alpha = 1 keeps every sample, which is just the empirical estimate
full = covest.fast_mcd(x, covest.McdConfig(alpha=1.0))
print("alpha=1 equals empirical:", np.array_equal(full, emp))

# C-steps never increase the determinant of the selected subset
h = covest.subset_size(len(x), 0.9)
start = [0, 1, 270, 271]  # two clean points, two outliers
loc, cov = x[start].mean(0), np.cov(x[start].T)
for step in range(6):
    _, loc, cov, log_det = covest.c_step(x, loc, cov, h)
    print(f"C-step {step}: log det = {log_det:.4f}")
