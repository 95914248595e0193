"""Mission-oriented drone network simulator with an energy-aware multi-agent
DQN training stack and an experiment harness."""

__version__ = "0.1.0"
