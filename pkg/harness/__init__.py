"""
Harness package.
Scenario configuration, run archives, experiment drivers and the command line.
"""

__version__ = "0.1.0"
