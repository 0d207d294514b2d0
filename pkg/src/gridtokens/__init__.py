"""Grid token stack: registry-driven issuers, a refresh-token broker, and the
clients and daemons that keep short-lived access tokens flowing to jobs."""

__version__ = "0.1.0"
