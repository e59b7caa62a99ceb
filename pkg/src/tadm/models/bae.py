"""Brain-age estimator head Psi: encoder features -> predicted age.

Global average pool over the feature map, then a two-layer perceptron.
The raw network output is mapped affinely to months, anchored at the
phantom age range midpoint, so the trainable part works on a unit scale
while callers always see months.
"""

from __future__ import annotations

from ..numerics import Rng, Tensor, reshape, silu, spatial_mean

AGE_MID_MONTHS = 822.0
AGE_HALF_RANGE = 318.0


class BaeHead:
    def __init__(self, rng: Rng, cin: int = 32, hidden: int = 64):
        from .layers import Linear
        self.fc1 = Linear(rng.child("fc1"), cin, hidden)
        self.fc2 = Linear(rng.child("fc2"), hidden, 1)

    def __call__(self, z: Tensor) -> Tensor:
        """Predicted ages in months, one per batch row: [N,H,W,C] -> [N]."""
        v = spatial_mean(z)
        y = self.fc2(silu(self.fc1(v)))
        y = reshape(y, (y.shape[0],))
        return y * AGE_HALF_RANGE + AGE_MID_MONTHS

    def named_params(self, prefix: str = "bae") -> dict[str, Tensor]:
        out = self.fc1.named_params(prefix + ".fc1")
        out.update(self.fc2.named_params(prefix + ".fc2"))
        return out
