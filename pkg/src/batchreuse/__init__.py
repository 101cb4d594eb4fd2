"""Batch-reusing gradient descent on shallow networks.

Tools for studying when a two-layer network trained by full-batch gradient
descent with batch reuse picks up hidden directions of a multi-index target
that one-pass SGD cannot reach in comparable time.  The package provides

- exact Hermite polynomial tables and Gauss-Hermite expectations (hermite),
- a registry of multi-index teacher functions (targets),
- a direction-hardness classifier based on moment functionals (hardness),
- a high-dimensional gradient-descent simulator (gdsim),
- discrete-time integrators for the effective low-dimensional
  pre-activation and weight processes (dmft),
- a command line runner with figure presets (cli).
"""

__version__ = "0.1.0"
