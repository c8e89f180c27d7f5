"""Link budget: free-space loss, building attenuation and receiver classes."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import ObstacleMap, Obstruction, Point, los_obstruction

FSPL_CONST_DB = 32.44  # d in km, f in MHz


@dataclass(frozen=True)
class LinkBudget:
    P_t: float = 20.0          # dBm
    G_t: float = 0.0           # dBi
    G_r: float = 0.0           # dBi
    f_mhz: float = 5900.0
    sensitivity: float = -85.0  # dBm
    margin: float = 3.0         # dB

    def __post_init__(self):
        if not self.f_mhz > 0:
            raise ValueError(f"carrier frequency must be positive, got {self.f_mhz} MHz")
        if self.margin < 0:
            raise ValueError(f"margin must be non-negative, got {self.margin}")


@dataclass(frozen=True)
class AttenuationParams:
    alpha: float = 9.0   # dB per wall crossing
    beta: float = 0.4    # dB per metre inside a building

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("attenuation coefficients must be non-negative")


@dataclass(frozen=True)
class ReceiverClass:
    loc: int          # 0: reachable directly, 1: shadowed, needs the fog layer
    P_r: float        # dBm
    distance: float = 0.0
    obstruction: Obstruction = Obstruction(0, 0.0)
    path_loss: float = 0.0
    O_shadow: float = 0.0

    def decodable(self, link: LinkBudget) -> bool:
        return self.P_r >= link.sensitivity


def fspl_db(d: float, f_mhz: float) -> float:
    if not d > 0 or not f_mhz > 0:
        raise ValueError(f"fspl needs positive distance and frequency (d={d}, f={f_mhz})")
    return FSPL_CONST_DB + 20.0 * math.log10(d / 1000.0) + 20.0 * math.log10(f_mhz)


def distance_from_loss(loss: float, f_mhz: float) -> float:
    """Distance in metres at which free-space loss equals ``loss``."""
    if not f_mhz > 0:
        raise ValueError(f"frequency must be positive, got {f_mhz}")
    return 10.0 ** ((loss - FSPL_CONST_DB - 20.0 * math.log10(f_mhz)) / 20.0) * 1000.0


def obstacle_attenuation(obstruction: Obstruction, params: AttenuationParams) -> float:
    return params.alpha * obstruction.n + params.beta * obstruction.l_obs


def received_power(link: LinkBudget, path_loss: float, O_shadow: float) -> float:
    return link.P_t + link.G_t + link.G_r - path_loss - O_shadow


def classify_receiver(obstacles: ObstacleMap, link: LinkBudget, params: AttenuationParams,
                      tx: Point, rx: Point, trans_range: float | None = None) -> ReceiverClass:
    """Predict received power at ``rx`` and decide whether it is shadowed.

    A receiver is shadowed (loc=1) only when a building is in the way *and*
    the predicted power falls inside the uncertainty band above sensitivity
    or below it. Clear line of sight is always loc=0.
    """
    d = math.dist(tx, rx)
    if d == 0:
        raise ValueError("transmitter and receiver coincide")
    if trans_range is not None and d > trans_range:
        raise ValueError(f"receiver at {d:.1f} m is beyond transmission range {trans_range} m")
    obs = los_obstruction(obstacles, tx, rx)
    loss = fspl_db(d, link.f_mhz)
    o_shadow = obstacle_attenuation(obs, params)
    p_r = received_power(link, loss, o_shadow)
    loc = 1 if obs.n > 0 and p_r < link.sensitivity + link.margin else 0
    return ReceiverClass(loc, p_r, d, obs, loss, o_shadow)
