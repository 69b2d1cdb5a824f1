"""Gaze-guided action anticipation on synthetic household activities.

Modules, bottom-up:

- ``numerics``: tape-based reverse-mode tensors, Adam, checkpoints
- ``gaze``: I-VT fixation filtering, per-frame tracks, gaze ablations
- ``world``: symbolic household world, activity programs, synthetic videos
- ``encoders``: synthetic visual/semantic encoders and a noisy detector
- ``graphbuild``: video prefix plus gaze track to visual-semantic graph
- ``model``: ECC encoder, activity head, LSTM action decoder, training
- ``evaluation``: metrics, ablation variants, crop-size sweeps
- ``cli``: the ``gazegraph`` command
"""
from .errors import GazeGraphError

__version__ = "0.1.0"

__all__ = ["GazeGraphError", "__version__"]
