"""Pure-state (P-ensemble) thermodynamics of a qubit in a finite bath.

Modules:
    quantum: composite pure states, partial traces, qubit and entropy helpers.
    models: benchmark Hamiltonians, Gibbs states and the ``beta'`` solver.
    sampler: Metropolis sampling of pure composite states.
    analytic: closed-form free energies and the qubit marginal ``P(z)``.
    landauer: heat bounds for state changes.
    cli: JSON-configured experiment runner.
"""
__version__ = "0.1.0"
