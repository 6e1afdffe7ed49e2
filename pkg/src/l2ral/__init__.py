"""Listwise loss-ranking active learning: autodiff engine, models, strategies and simulator."""

__version__ = "0.1.0"
