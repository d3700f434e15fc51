"""Numerical toolkit for Bell tests with local precertification of photon presence.

Submodules:

* :mod:`precert_bell.qstate` -- small dense Fock/qubit state engine
* :mod:`precert_bell.precert` -- single-photon down-conversion splitter and flag heralding
* :mod:`precert_bell.optics` -- rates, losses, detectors, colored-noise states
* :mod:`precert_bell.bell` -- behaviors, CHSH, local-polytope LP, efficiency thresholds
* :mod:`precert_bell.spacetime` -- causality constraints of the experiment layout
* :mod:`precert_bell.montecarlo` -- event-level simulation of the full scheme
* :mod:`precert_bell.plotting` -- figures for the report path
* :mod:`precert_bell.cli` -- ``precert-bell`` command line
"""

__version__ = "0.1.0"
