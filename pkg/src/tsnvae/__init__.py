"""Tactile-sensitive latent world model for planar connector insertion.

Library layout:

- ``autodiff``, ``gaussian``, ``optim`` — float64 reverse-mode AD core,
  diagonal-Gaussian ops, Adam.
- ``sim`` — deterministic planar insertion environment with synthetic
  camera and tactile rendering.
- ``data`` — episode collection protocol and the on-disk dataset container.
- ``model``, ``train`` — the model family (all six variants), losses, and
  the training loop with checkpoint I/O.
- ``control`` — proportional control in latent space plus the trial
  benchmark harness.
- ``cfil`` — two-stage pose-regression baseline, tactile estimators, and
  planar coordinate-transform compensation.
- ``evalvis`` — latent-map diagnostics, SVG export, benchmark reports.
- ``figures`` — matplotlib report figures rendered next to the reports.
- ``config``, ``cli`` — run configuration, seed derivation, command line.
"""

__version__ = "0.1.0"
