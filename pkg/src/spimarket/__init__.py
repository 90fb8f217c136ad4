"""Stationary prophet-inequality market toolkit.

LP relaxations, contention resolution schemes, birth-death analytics,
submodular machinery, an event-driven CTMC market simulator, experiment
recipes, and a CLI.
"""

__version__ = "0.1.0"
