"""Markets generated from a latent quality signal observed with noise.

Every student carries one latent quality draw; each college observes it
through independent gaussian noise whose variance depends on the group.
The observed scores are then equicorrelated gaussian within a group, with
correlation equal to the signal's share of the total variance.
"""

from __future__ import annotations

from dataclasses import dataclass

from .copula import GaussianEquicorrelated
from .errors import ConstructionError
from .scores import Gaussian, GroupScoreModel
from .solver import MarketShell, MarketSpec


@dataclass(frozen=True)
class LatentNoiseSpec:
    """Quality variance, per-group noise variances, and the scale convention.

    standardize=True rescales every observed score to unit variance, so all
    groups share standard-normal marginals and differ only in correlation.
    """

    quality_var: float
    noise_vars: tuple[float, ...]
    standardize: bool = True

    def __post_init__(self):
        if self.quality_var <= 0.0:
            raise ConstructionError("quality variance must be strictly positive")
        if len(self.noise_vars) == 0 or any(v <= 0.0 for v in self.noise_vars):
            raise ConstructionError("noise variances must be strictly positive")

    def signal_share(self, group: int) -> float:
        """Correlation of two observed scores of one student in this group."""
        return self.quality_var / (self.quality_var + self.noise_vars[group])


def latent_to_market(lns: LatentNoiseSpec, shell: MarketShell, m: int) -> MarketSpec:
    """Market whose group score models realize the signal-plus-noise law."""
    if len(lns.noise_vars) != len(shell.gammas):
        raise ConstructionError("need one noise variance per group")
    models = []
    for j in range(len(shell.gammas)):
        var = 1.0 if lns.standardize else lns.quality_var + lns.noise_vars[j]
        marginals = tuple(Gaussian(0.0, var) for _ in range(m))
        models.append(
            GroupScoreModel(marginals, GaussianEquicorrelated(m), lns.signal_share(j))
        )
    return MarketSpec(
        alpha=shell.alpha, gammas=shell.gammas, betas=shell.betas,
        models=tuple(models),
    )
