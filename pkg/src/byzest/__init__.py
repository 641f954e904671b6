"""Byzantine-resilient cooperative state estimation: simulator and analysis toolkit.

A network of agents estimates an unknown vector from noisy linear
measurements.  Good agents run local gradient descent and aggregate
neighbor messages with coordinate-wise trimmed means; up to ``b`` agents
are controlled by an omniscient adversary.  The package simulates the
protocol, validates the observability conditions it needs, and computes
its finite-time error envelopes.
"""

__version__ = "0.1.0"
