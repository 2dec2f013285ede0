"""Whitespace identification with binary proximity sensors on [0, 1].

Modules:

* :mod:`whitespace.geometry` - interval algebra on the unit segment
* :mod:`whitespace.field_model` - densities, scaling laws and sampled worlds
* :mod:`whitespace.recovery` - void reconstruction, majority decoding, localization
* :mod:`whitespace.density_opt` - optimal sensor density and miss probabilities
* :mod:`whitespace.harness` - seeded Monte Carlo experiments with CSV output
* :mod:`whitespace.cli` - command-line front end
"""

__version__ = "0.1.0"
