"""
TrackLab: budgeted gradient tracking on weighted streaming objectives,
with closed-form tracking-error bounds and a Monte-Carlo experiment harness.
"""

__version__ = "1.0.0"
