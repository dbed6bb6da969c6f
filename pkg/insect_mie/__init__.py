"""
insect-mie
Motion-Informed Enhancement of time-lapse image sequences for small insect detection,
with a baseline detector, detection evaluation and abundance analysis.
"""

__version__ = "1.0.0"
