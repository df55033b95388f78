"""specpilot: turn validated test specifications into reviewed test scripts.

A batch run retrieves similar historical spec/script pairs, adapts one into a
candidate script, executes it against a simulated system, scores it, and
repairs it for a bounded number of iterations. Humans approve what enters the
regression suite.
"""

__version__ = "0.1.0"
