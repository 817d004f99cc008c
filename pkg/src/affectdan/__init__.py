# This file makes 'src/affectdan' a Python package.
# affectdan: multi-head attention network for facial expression and
# valence/arousal recognition, on a small numpy autodiff engine.

__version__ = "0.1.0"
