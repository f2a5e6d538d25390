"""
Attacks Module for the CosDefense simulator

Untargeted poisoning attacks run by the malicious clients:
- IPM (inner product manipulation): every attacker sends -epsilon times
  the mean of the round's benign updates
- Label flip: attackers train on labels c -> C - 1 - c
- Sign flip and Gaussian noise updates

Malicious clients always train honestly first; the attack hook then
replaces their updates, so IPM can read the benign updates of the round.
"""

import logging
from functools import partial
from typing import List, Optional, Sequence

import numpy as np

from . import config
from .exceptions import ConfigurationError
from .experiment_config import AttackSpec
from .fl_core import ClientUpdate, LabelTransform
from .tensor_nn import ParamVector
from .utils import derive_rng, log_analysis_step

logger = logging.getLogger(__name__)

__all__ = [
    "AttackSpec",
    "AttackInjector",
    "ipm_craft",
    "label_flip",
    "sign_flip",
    "gauss_noise",
]


def ipm_craft(
    benign_deltas: Sequence[ParamVector],
    epsilon: float,
    num_malicious: int,
    template: Optional[ParamVector] = None,
) -> List[ParamVector]:
    """
    Craft the coordinated IPM updates.

    Args:
        benign_deltas: Updates of the round's benign clients
        epsilon: Scale (> 0)
        num_malicious: m >= 1 attackers to craft for
        template: Layout source when no benign update exists

    Returns:
        m identical updates equal to -epsilon * mean(benign_deltas); all
        zeros when there are no benign updates
    """
    if epsilon <= 0:
        raise ConfigurationError(f"IPM epsilon must be > 0, got {epsilon}")
    if num_malicious < 1:
        raise ConfigurationError(f"IPM needs at least one attacker, got {num_malicious}")

    if not benign_deltas:
        if template is None:
            raise ConfigurationError("IPM without benign updates needs a layout template")
        crafted = template.with_values(np.zeros_like(template.values))
    else:
        mean = np.mean(np.stack([d.values for d in benign_deltas]), axis=0)
        crafted = benign_deltas[0].with_values(-epsilon * mean)
    return [crafted] * num_malicious


def label_flip(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """
    Symmetric label flip c -> C - 1 - c.

    Example:
        >>> label_flip(np.array([1, 9]), 10).tolist()
        [8, 0]
    """
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ConfigurationError(f"Labels must lie in [0, {num_classes})")
    return num_classes - 1 - labels


def sign_flip(delta: ParamVector) -> ParamVector:
    return delta.with_values(-delta.values)


def gauss_noise(template: ParamVector, sigma: float, rng: np.random.Generator) -> ParamVector:
    """
    Zero-mean Gaussian noise shaped like template, standard deviation sigma.
    """
    if sigma < 0:
        raise ConfigurationError(f"Noise sigma must be >= 0, got {sigma}")
    return template.with_values(sigma * rng.standard_normal(template.values.shape))


class AttackInjector:
    """
    Attack hook for the round engine.

    Before spec.start_round (or with kind 'none') it leaves every update
    untouched.
    """

    def __init__(self, spec: AttackSpec, num_classes: int, seed: int = config.DEFAULT_SEED):
        self.spec = spec
        self.num_classes = num_classes
        self.seed = seed
        log_analysis_step(
            "Attack", f"{spec.kind} from round {spec.start_round}", "DEBUG"
        )

    def is_active(self, round_index: int) -> bool:
        return self.spec.kind != "none" and round_index >= self.spec.start_round

    def label_transform(self, round_index: int) -> Optional[LabelTransform]:
        if self.spec.kind == "label_flip" and self.is_active(round_index):
            return partial(label_flip, num_classes=self.num_classes)
        return None

    def __call__(self, round_index: int, updates: List[ClientUpdate]) -> List[ClientUpdate]:
        """
        Replace the malicious clients' updates for this round.
        """
        # label flip acts on the training data, not on the update
        if not self.is_active(round_index) or self.spec.kind == "label_flip":
            return updates

        malicious = [u for u in updates if u.is_malicious_truth]
        if not malicious:
            return updates

        if self.spec.kind == "ipm":
            benign = [u.delta for u in updates if not u.is_malicious_truth]
            crafted = ipm_craft(benign, self.spec.epsilon, len(malicious), template=updates[0].delta)
            replacements = {u.client_id: d for u, d in zip(malicious, crafted)}
        elif self.spec.kind == "sign_flip":
            replacements = {u.client_id: sign_flip(u.delta) for u in malicious}
        elif self.spec.kind == "gauss_noise":
            replacements = {
                u.client_id: gauss_noise(
                    u.delta,
                    self.spec.noise_sigma,
                    derive_rng(self.seed, round_index, u.client_id, config.STREAM_ATTACK_NOISE),
                )
                for u in malicious
            }
        else:
            raise ConfigurationError(f"Unknown attack kind: {self.spec.kind}")

        return [
            u.replace_delta(replacements[u.client_id]) if u.client_id in replacements else u
            for u in updates
        ]
