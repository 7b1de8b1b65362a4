"""Simulator, scenario generator, and scheduler suite for agile
Earth-observation satellite constellations.

Subpackage map:

- :mod:`satsched.astro` — two-body orbits, ground targets, illumination
- :mod:`satsched.attitude` — MRP attitude dynamics, reaction wheels, control
- :mod:`satsched.assets` — asset/task/scenario sampling and dataset splits
- :mod:`satsched.simulator` — constraint-checked stepping and rollouts
- :mod:`satsched.metrics` — completion/power metrics and composite score
- :mod:`satsched.schedulers` — random, greedy, plan-table, hill-climbing
- :mod:`satsched.annotate` — ground-truth annotation pipeline
- :mod:`satsched.features` — observation matrices and training labels
- :mod:`satsched.model` — attention-based assignment matcher (torch)
- :mod:`satsched.training` — supervised + iterative training loops
- :mod:`satsched.fileio` — scenario/trajectory/report serialization
- :mod:`satsched.harness` — parallel evaluation harness
- :mod:`satsched.cli` — command-line entry points
"""

__version__ = "0.1.0"
