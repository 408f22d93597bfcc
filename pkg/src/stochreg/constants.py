"""Numerical tolerances shared across the package.

Every threshold used by a check, a solver or a verification lives here so
that a single edit changes behaviour everywhere.
"""

#: default absolute tolerance
ATOL = 1e-9
#: default relative tolerance
RTOL = 1e-7

#: allowed asymmetry before :func:`min_eig_sym` refuses its input
SYM_TOL = 1e-9
#: singular values below RANK_TOL * sigma_max count as zero
RANK_TOL = 1e-8
#: distance from the imaginary axis still treated as neutral
TOL_NEUTRAL = 1e-8
#: eigenvector condition number above which a matrix counts as defective
DEFECTIVE_COND = 1e8
#: eigenvalues with real part >= -TOL_STAB are tested in PBH checks
TOL_STAB = 1e-9

#: residual scale of the plant regulator equations
REGULATOR_RTOL = 1e-8
#: residual scale of the augmented (Francis) equations
FRANCIS_RTOL = 1e-7

#: lower bound on the Lyapunov blocks, relative to the trace normalisation
LMI_EPS = 1e-4
#: trace(P1) + trace(P2) <= LMI_TRACE_SCALE * (n + p)
LMI_TRACE_SCALE = 10.0
#: a solve counts as feasible when the block's top eigenvalue is below -LMI_STRICT
LMI_STRICT = 1e-7
#: accepted top eigenvalue of a reconstructed certificate
CERT_TOL = 1e-7
#: absolute tolerance of the gamma / lambda bisections
BISECT_TOL = 1e-3

#: pole-placement accuracy contract
PLACE_TOL = 1e-6
