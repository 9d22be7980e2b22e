"""Packetized direct load control for pools of thermostatic appliances."""

__version__ = "0.1.0"
