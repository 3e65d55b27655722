"""Simulation and analysis of real-time electricity price dynamics under memory-based consumption."""
from .core import DemandProfile, MarketParams, Trajectory
from .dynamics import Model, SimulationConfig, simulate

__all__ = ["DemandProfile", "MarketParams", "Model", "SimulationConfig", "Trajectory", "simulate"]
__version__ = "0.1.0"
