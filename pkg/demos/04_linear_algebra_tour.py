"""The small linear-algebra kernel under the beamformers.

Diagonal loading keeps inversion well posed even for rank-deficient
covariances; power iteration recovers the principal eigenvector that serves
as a steering vector.  Both are checked against numpy's dense solvers.

    python demos/04_linear_algebra_tour.py
"""
import numpy as np

from mvdrkit import linalg

rng = np.random.default_rng(0)
b = rng.standard_normal((6, 2)) + 1j * rng.standard_normal((6, 2))
rank2 = b @ b.conj().T  # singular 6x6 covariance
inv = linalg.inv_loaded(rank2)
lam = linalg.loading(rank2)
loaded = rank2 + lam[..., None, None] * np.eye(6)
print(f"loading lambda          {float(lam):.3e}")
print(f"|loaded @ inv - I|_max  {np.abs(loaded @ inv - np.eye(6)).max():.2e}")

v = linalg.principal_eigvec(rank2)
w, vecs = np.linalg.eigh(rank2)
ref = linalg.fix_phase(vecs[:, -1])
print(f"eigvec vs eigh          {np.abs(v - ref).max():.2e}")
print(f"Rayleigh quotient       {np.real(v.conj() @ rank2 @ v):.4f}  (largest eigenvalue {w[-1]:.4f})")
