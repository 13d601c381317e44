"""Accuracy diagnostics for molecular dynamics near crossing potential surfaces.

Submodules:

* ``model``       two-state matrix potentials and adiabatic frames
* ``eigensolve``  discrete Schrodinger eigenproblems and spectral estimates
* ``dynamics``    ground-surface and mean-field symplectic propagators
* ``estimators``  trajectory/Monte Carlo estimators of probabilities and
                  observables
* ``cli``         reproducible experiment runner (``nmd`` entry point)
"""

from . import cli, dynamics, eigensolve, errors, estimators, model

__version__ = "0.1.0"

__all__ = ["model", "eigensolve", "dynamics", "estimators", "cli", "errors",
           "__version__"]
