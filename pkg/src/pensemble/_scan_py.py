"""Pure-Python Metropolis accept/reject scan (fallback for the compiled kernel)."""
import numpy as np


def metropolis_scan(energies, log_u, beta_prime, current_energy):
    """Same contract as the compiled ``metropolis_scan``."""
    energies = np.asarray(energies, dtype=float)
    log_u = np.asarray(log_u, dtype=float)
    n = energies.size
    index = np.empty(n, dtype=np.int64)
    accepted = np.empty(n, dtype=np.uint8)
    held = -1
    e = float(current_energy)
    bp = float(beta_prime)
    en = energies.tolist()
    lu = log_u.tolist()
    for i in range(n):
        de = en[i] - e
        if de <= 0.0 or lu[i] < -bp * de:
            held = i
            e = en[i]
            accepted[i] = 1
        else:
            accepted[i] = 0
        index[i] = held
    return index, accepted, e
