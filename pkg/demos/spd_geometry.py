"""Walk through the SPD toolkit: distances, means and the LogEuclidean kernel."""
import numpy as np

from texcov import spd

rng = np.random.default_rng(0)


def random_spd(d, spread=1.0):
    a = rng.standard_normal((d, d)) * spread
    return a @ a.T + d * np.eye(d)


a, b = random_spd(3), random_spd(3, spread=2.0)

# eigen-decomposition by cyclic Jacobi; eigenvalues come back in descending order
w, v = spd.sym_eig(a)
print("eigenvalues of A:", np.round(w, 4))
print("reconstruction error:", np.abs((v * w) @ v.T - a).max())

# affine-invariant distance is unchanged by any congruence W . W^T
w_map = rng.standard_normal((3, 3))
print("d(A, B)          =", spd.riemannian_distance(a, b))
print("d(WAW^T, WBW^T)  =", spd.riemannian_distance(w_map @ a @ w_map.T, w_map @ b @ w_map.T))

# the mean of two matrices is the geodesic midpoint
m = spd.riemannian_mean([a, b])
print("mean vs midpoint:", np.abs(m - spd.geodesic_midpoint(a, b)).max())
print("distances to the midpoint:", spd.riemannian_distance(a, m), spd.riemannian_distance(b, m))

# a small cloud of matrices, its Karcher mean and the kernel at two references
cloud = np.stack([random_spd(3, spread=s) for s in np.linspace(0.5, 2.0, 8)])
for ref in (spd.KernelRef.identity(3), spd.KernelRef.riemannian_mean(cloud)):
    k = spd.gram_matrix(cloud, ref.matrix)
    print(f"\nGram matrix at the {ref.mode} reference (min eigenvalue "
          f"{np.linalg.eigvalsh(k)[0]:.2e}):")
    print(np.round(k, 3))
