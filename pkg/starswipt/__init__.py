"""
STAR-SWIPT: robust secrecy optimization for STAR-RIS aided RSMA SWIPT downlinks
"""

__version__ = "1.0.0"
