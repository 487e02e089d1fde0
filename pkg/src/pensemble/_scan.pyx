# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled Metropolis accept/reject scan."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def metropolis_scan(const double[::1] energies, const double[::1] log_u,
                    double beta_prime, double current_energy):
    """Sequential independence-sampler scan over a block of proposals.

    Args:
        energies: proposal energies.
        log_u: logs of uniforms in (0, 1], one per proposal.
        beta_prime: inverse statistical temperature.
        current_energy: energy of the state held before the block.

    Returns:
        ``(index, accepted, energy)``: for each step the proposal index of the
        held state (-1 while the pre-block state is held), the accept flags,
        and the energy held after the block.
    """
    cdef Py_ssize_t n = energies.shape[0]
    cdef Py_ssize_t i
    cdef long long held = -1
    cdef double e = current_energy
    cdef double de
    index = np.empty(n, dtype=np.int64)
    accepted = np.empty(n, dtype=np.uint8)
    cdef long long[::1] idx = index
    cdef unsigned char[::1] acc = accepted
    for i in range(n):
        de = energies[i] - e
        if de <= 0.0 or log_u[i] < -beta_prime * de:
            held = i
            e = energies[i]
            acc[i] = 1
        else:
            acc[i] = 0
        idx[i] = held
    return index, accepted, e
