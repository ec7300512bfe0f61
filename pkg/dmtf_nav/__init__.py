"""
DMTF Audio-Visual Navigation
============================

A desk-scale audio-visual embodied-navigation lab.

This package provides:
- ndgrad, a small numpy tensor library with reverse-mode differentiation
- A procedurally generated grid world with egocentric vision and binaural audio
- The multi-target transformer fusion policy with GRU state and actor-critic heads
- Hungarian set matching, recurrent PPO training and SR/SPL/SNA evaluation
- A command-line interface for suites, training, evaluation and ablations

License: MIT
Version: 1.0.0
"""

__version__ = "1.0.0"
__author__ = "DMTF Nav Team"
__license__ = "MIT"

__all__ = ["__version__"]
