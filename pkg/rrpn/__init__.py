"""
Radar Region Proposals
Radar-driven object proposals for camera images: projection, distance-compensated
anchors, distance-law calibration and proposal-quality evaluation.
"""

__version__ = "1.0.0"
