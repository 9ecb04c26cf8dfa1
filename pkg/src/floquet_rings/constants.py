"""Physical constants (SI) used across the package."""

HBAR = 1.054571817e-34  # J s
C0 = 2.99792458e8       # m / s
EPS0 = 8.8541878128e-12  # F / m

# Conversion: waveguide propagation loss quoted in dB/cm -> amplitude
# attenuation in 1/m is  alpha_dB * LN10_OVER_20 * 100.
LN10_OVER_20 = 0.11512925464970229
