"""Online stiffness estimation and adaptive compliance-shaping amplification
for a one-DOF elbow exoskeleton, in simulation."""

__version__ = "0.1.0"
