"""Zero-knowledge-proof authentication for body area networks: the two
handshake schemes, a symbolic attacker, and a posture-driven simulator."""

__version__ = "0.1.0"
