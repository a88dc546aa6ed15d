"""Per-pixel prediction uncertainty from logits.

U = 1 - max_c softmax(logits): 0 where one class holds all the mass, and at
most 1 - 1/C for a uniform distribution. Differentiable end to end; callers
that want the map as a pure gate detach it.
"""

from . import ops


def uncertainty_from_logits(logits):
    """1 - max softmax probability, shape B x 1 x H x W."""
    probs = ops.softmax_channels(logits)
    confidence = ops.channel_max(probs)
    return ops.add_scalar(ops.scale(confidence, -1.0), 1.0)


def hr_uncertainty_source(hr_aux_logits):
    """Uncertainty of the auxiliary high-resolution head's logits."""
    return uncertainty_from_logits(hr_aux_logits)
