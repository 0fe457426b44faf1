"""Central numerical policy: every tolerance used across the package lives here."""

import os

# Algebraic identities (exact in exact arithmetic) are asserted to this
# absolute/relative tolerance in double precision.
ALGEBRA_TOL = 1e-12

# Default tolerance for plane classification (tau vanishing / calibration).
CLASSIFY_TOL = 1e-10

# Frames whose condition number exceeds this are rejected rather than
# silently orthonormalized.
FRAME_CONDITION_LIMIT = 1e8

# Perturbed-frame family |t_i| <= DELTA_PERTURBATION is the regime where the
# projected normals stay uniformly independent (Gram det >= 0.5).
DELTA_PERTURBATION = 0.1

# Discretization margin allowed when comparing discrete eigenvalues against
# continuum bounds.
SPECTRAL_MARGIN = 0.05

# Eigenvalues below this count as numerically zero (kernel detection).
KERNEL_EIG_TOL = 1e-8

# Immersion guard for ruled patches.
PATCH_CONDITION_LIMIT = 1e4

DEFAULT_SEED = 0


def max_workers() -> int:
    """Parallelism cap for sweep-style drivers, from G2LAB_THREADS."""
    raw = os.environ.get("G2LAB_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n
