"""
Post-selection network-wide metrics of regression predictors and their
clustering by sequential testing.
"""

__version__ = '0.1.0'
