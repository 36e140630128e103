"""tacforce: a desk-scale lab for 3D contact-force estimation.

Simulates a camera-based tactile sensor pressing against rigid tools,
trains a small vision network to regress the 3D contact force from the
resulting images, and exercises the estimator on calibration and
manipulation-style downstream tasks.
"""

__version__ = "0.1.0"
