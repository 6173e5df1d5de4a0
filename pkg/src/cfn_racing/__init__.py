"""Headless drone-racing simulator and a controller fusion training harness.

A conservative and an aggressive PID controller fly a track; their
demonstrations are filtered through short temporary buffers so only
behaviour that kept the vehicle on the track reaches the training database
of a small policy network.
"""

__version__ = "0.1.0"
