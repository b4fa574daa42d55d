"""Desk-scale 3D molecule generation.

Subpackages:
  chem       elements, graphs, geometry, hashing, fingerprints
  nn         numpy autodiff substrate, layers, optimizers, checkpoints
Modules:
  selfies    robust molecular string grammar (total decoder)
  lm         autoregressive token language model over the grammar
  bridge     learnable-query condition extractor over frozen hidden states
  diffusion  coordinate denoising diffusion for conformers
  metrics    2D validity/stability/uniqueness/novelty + 3D MMD battery
  properties surrogate property oracles and MAE scoring
  data       dataset records, JSONL/XYZ formats, seeded splits
  toydata    synthetic corpora with force-layout conformers
  config     single-JSON run configuration and hashing
  pipeline   dataset ingest, training orchestration, report emission
  plots      headless histogram figures for reports
  cli        command-line entry point
"""

__version__ = "0.1.0"
