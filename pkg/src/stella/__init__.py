"""Position-bias probing and Bayesian calibration for listwise LLM recommenders."""

__version__ = "0.1.0"
