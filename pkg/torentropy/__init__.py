"""Entropy of Bergman measures on toric Kähler manifolds"""

import logging

__version__ = '0.1.0'

logging.getLogger(__name__).addHandler(logging.NullHandler())
