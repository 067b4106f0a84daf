"""Space-time radiance fields for a five-camera multiscopic rig.

Trains a neural radiance field over position, viewing direction and time
from synchronized five-view video, with flow-based temporal-consistency
supervision and joint optimization of camera parameters. Ships with a
procedural synthetic data generator and an evaluation harness.
"""

__version__ = "0.1.0"
