"""Physical constants shared across the package."""

#: Planck constant times speed of light, eV nm.
HC_EV_NM = 1239.8419

#: Boltzmann constant, meV / K.
KB_MEV_PER_K = 8.617333262e-2
