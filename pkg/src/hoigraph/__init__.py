"""Human-object interaction scoring on precomputed detections.

The package turns detector output into scored <human, action, object>
triplets: pair geometry is rasterized into a two-channel layout image,
combined with an object-category word embedding, refined by attentional
message passing over human-centric and object-centric pair subgraphs, and
fused with the appearance-stream scores. A role-mAP evaluator and a
training loop with gradient-checked analytic backprop round out the
pipeline.
"""

__version__ = "0.1.0"
