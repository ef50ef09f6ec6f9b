"""
Domain services: weights, losses, objectives, tracking, theory, streams and experiments.
"""
