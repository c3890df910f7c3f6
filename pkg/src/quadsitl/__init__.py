"""Software-in-the-loop quadrotor simulation and flight-control toolkit."""

__version__ = "0.1.0"
