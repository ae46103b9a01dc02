"""Capacities and Eyring-Kramers asymptotics for non-reversible diffusions."""
__version__ = "0.1.0"
