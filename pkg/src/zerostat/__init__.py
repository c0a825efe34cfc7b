"""Zero statistics of Gaussian random holomorphic sections over CP^m."""

__version__ = "0.1.0"
