"""
Turning pixel probabilities into field decisions
================================================

Majority voting counts pixel argmaxes; averaging takes the per-class mean.
Bayesian fusion first shrinks every pixel vector toward uniform
(p-hat = a*p + (1-a)/(N-1)*(1-p)), then sums log-odds across the field
and picks the class with the smallest I(k) -- equivalently the largest
fused posterior 1/(1+exp(I)). Agreement across repeated confident pixels
compounds, which majority voting cannot express.
"""

import numpy as np

from fieldfuse import (
    SmoothingConfig,
    aggregate_average,
    aggregate_bayesian,
    aggregate_majority,
    smooth,
)

# ---------------------------------------------------------------------------
# Smoothing: full confidence maps to alpha, zeros share the rest
# ---------------------------------------------------------------------------
cfg = SmoothingConfig(alpha=0.35, n_classes=8)
certain = np.zeros(8)
certain[0] = 1.0
print("smooth([1, 0, ..., 0], alpha=0.35, N=8) =", np.round(smooth(certain, cfg), 4))
uniform = np.full(8, 1 / 8)
print("uniform is a fixed point:", np.allclose(smooth(uniform, cfg), uniform), "\n")

# ---------------------------------------------------------------------------
# One confident pixel can outvote two lukewarm ones
# ---------------------------------------------------------------------------
field = np.array([[0.9, 0.1], [0.45, 0.55], [0.45, 0.55]])
cfg2 = SmoothingConfig(alpha=0.9, n_classes=2)
print("pixels:")
print(field)
print(f"majority  -> class {aggregate_majority(field).class_index} "
      f"(votes {np.round(aggregate_majority(field).scores, 2)})")
print(f"average   -> class {aggregate_average(field).class_index} "
      f"(means {np.round(aggregate_average(field).scores, 2)})")
bayes = aggregate_bayesian(field, cfg2)
print(f"bayesian  -> class {bayes.class_index} "
      f"(fused posteriors {np.round(bayes.scores, 3)})\n")

# ---------------------------------------------------------------------------
# Confidence reinforcement: m identical pixels, fused score sigmoid(m*logit)
# ---------------------------------------------------------------------------
base = np.array([0.7, 0.1, 0.1, 0.1])
cfg3 = SmoothingConfig(alpha=0.8, n_classes=4)
p_hat = smooth(base, cfg3)[0]
print(f"smoothed top probability: {p_hat:.3f}")
print(" m  fused score")
for m in (1, 2, 3, 5, 10):
    pred = aggregate_bayesian(np.tile(base, (m, 1)), cfg3)
    print(f"{m:2d}  {pred.scores[0]:.6f}")
print("(matches 1/(1+exp(-m*logit(p_hat))) exactly)\n")

# ---------------------------------------------------------------------------
# Duplicating every pixel rescales I(k) but never flips the decision
# ---------------------------------------------------------------------------
rng = np.random.default_rng(7)
raw = rng.random((12, 4))
probs = raw / raw.sum(axis=1, keepdims=True)
cfg4 = SmoothingConfig(alpha=0.5, n_classes=4)
once = aggregate_bayesian(probs, cfg4)
twice = aggregate_bayesian(np.vstack([probs, probs]), cfg4)
print(f"12 pixels -> class {once.class_index}; duplicated 24 -> class {twice.class_index}")
