"""Sector profitability from LSTM next-day price forecasts."""
__version__ = "0.1.0"
