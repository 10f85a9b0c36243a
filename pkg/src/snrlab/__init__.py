"""snrlab: exact-oracle laboratory for SNR-path token localization.

Library modules:
  corpus      vocabularies, spherical embeddings, empirical distributions
  denoiser    exact tilted-posterior denoising and oracles
  dynamics    SNR paths, conditional/unconditional SDE simulation, decoding
  likelihood  path-integral NLL estimation with exact oracles
  corruption  token-wise mixed SNR sampling and forward corruption
  converter   softmax converter and its small trainable head
  refine      masked-refinement samplers (reveal / cap-loop / confidence)
  diagnostics decoding diagnostics, rewrite counts, calibration
  cli         command-line experiments emitting CSV/JSONL (+ figures)
"""

__version__ = "0.1.0"
