"""pwsec: security rule analysis, corpus tooling, repair metrics, and
RL reward scoring for PowerShell scripts."""

__version__ = "0.1.0"
