"""
Collaborative filtering with IWO-learned neighbor importance weights
"""

__version__ = '0.1.0'
