"""Real-time waiting-time distribution prediction for multi-server queues.

Simulation, delay-history datasets, point predictors and mixture density
networks, plus the metrics used to compare them.
"""

__version__ = "0.1.0"
