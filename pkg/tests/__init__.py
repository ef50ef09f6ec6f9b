"""
Test suite for TrackLab.
"""
