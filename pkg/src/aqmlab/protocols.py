"""Window update functions per TCP variant and drop probability functions
per queue policy, with the analytic derivatives the stability machinery needs.

All functions are pure; increase/decrease derivatives are closed-form, not
numeric, because the normal-form computation consumes second and third
derivatives where finite differences would be too noisy.
"""

from __future__ import annotations

import math

from .errors import DomainError
from .params import NetworkParams, ProtocolSpec, RedParams, ThresholdParams, Variant

# AFRICA-TCP constants: b(w) = 0.5 - B_AF*ln(w/38), a(w) = 0.156 w^2 b / ((2-b) w^1.2)
_AF_B = 0.4 / (math.log(83000.0) - math.log(38.0))
_AF_W0 = 38.0
_AF_C = 0.156


def _africa_b(w: float, order: int) -> float:
    if order == 0:
        return 0.5 - _AF_B * (math.log(w) - math.log(_AF_W0))
    if order == 1:
        return -_AF_B / w
    if order == 2:
        return _AF_B / (w * w)
    return -2.0 * _AF_B / (w * w * w)


def _africa_increase(w: float, order: int) -> float:
    # i(w) = a(w)/w = C * w^(-0.2) * b/(2-b); singular as b -> 2, invalid b <= 0
    b = _africa_b(w, 0)
    if not 0.0 < b < 2.0:
        raise DomainError(f"AFRICA window function undefined at w={w} (b={b:.4g})")
    # g(b) = b/(2-b) and its b-derivatives
    g = (b / (2.0 - b), 2.0 / (2.0 - b) ** 2, 4.0 / (2.0 - b) ** 3, 12.0 / (2.0 - b) ** 4)
    db = [_africa_b(w, n) for n in range(4)]
    # h(w) = g(b(w)) via Faa di Bruno up to third order
    h0 = g[0]
    h1 = g[1] * db[1]
    h2 = g[2] * db[1] ** 2 + g[1] * db[2]
    h3 = g[3] * db[1] ** 3 + 3.0 * g[2] * db[1] * db[2] + g[1] * db[3]
    p = -0.2
    u0 = _AF_C * w**p
    u1 = _AF_C * p * w ** (p - 1)
    u2 = _AF_C * p * (p - 1) * w ** (p - 2)
    u3 = _AF_C * p * (p - 1) * (p - 2) * w ** (p - 3)
    if order == 0:
        return u0 * h0
    if order == 1:
        return u1 * h0 + u0 * h1
    if order == 2:
        return u2 * h0 + 2.0 * u1 * h1 + u0 * h2
    return u3 * h0 + 3.0 * u2 * h1 + 3.0 * u1 * h2 + u0 * h3


def _power_law_increase(alpha: float, k: float, w: float, order: int) -> float:
    # alpha * w^(k-1) and derivatives
    coeff = alpha
    expo = k - 1.0
    for _ in range(order):
        coeff *= expo
        expo -= 1.0
    return coeff * w**expo


def increase_rate(spec: ProtocolSpec, w: float, order: int = 0) -> float:
    """Per-acknowledgement window increase i(w), or its derivative.

    order 0 returns i(w); orders 1..3 return exact analytic derivatives.
    """
    if not w > 0:
        raise DomainError(f"window must be > 0, got {w}")
    if not 0 <= order <= 3:
        raise DomainError(f"unsupported derivative order {order}")
    v = spec.variant
    if v is Variant.COMPOUND:
        c = spec.compound
        return _power_law_increase(c.alpha, c.k, w, order)
    if v is Variant.RENO:
        # i(w) = 1/w
        return _power_law_increase(1.0, 0.0, w, order)
    if v is Variant.ILLINOIS:
        # i(w) = alpha_max / w
        return _power_law_increase(spec.illinois.alpha_max, 0.0, w, order)
    return _africa_increase(w, order)


def decrease_rate(spec: ProtocolSpec, w: float, order: int = 0) -> float:
    """Per-drop window decrease d(w), or its first derivative."""
    if not w > 0:
        raise DomainError(f"window must be > 0, got {w}")
    if not 0 <= order <= 1:
        raise DomainError(f"unsupported derivative order {order}")
    v = spec.variant
    if v is Variant.COMPOUND:
        beta = spec.compound.beta
        return beta * w if order == 0 else beta
    if v is Variant.RENO:
        return w / 2.0 if order == 0 else 0.5
    if v is Variant.ILLINOIS:
        bm = spec.illinois.beta_min
        return bm * w if order == 0 else bm
    b = _africa_b(w, 0)
    if not 0.0 < b < 2.0:
        raise DomainError(f"AFRICA window function undefined at w={w} (b={b:.4g})")
    # d(w) = w*b(w); d' = b + w*b' = b - B_AF
    return w * b if order == 0 else b - _AF_B


def red_drop_probability(avg_q: float, red: RedParams) -> float:
    """RED drop probability as a piecewise function of the averaged queue."""
    if avg_q < 0:
        raise DomainError(f"average queue must be >= 0, got {avg_q}")
    if avg_q <= red.b_min:
        return 0.0
    if avg_q < red.b_max:
        p = red.rho * (avg_q - red.b_min)
    elif avg_q < 2.0 * red.b_max:
        p = red.eta * avg_q - (1.0 - 2.0 * red.p_max)
    else:
        return 1.0
    return min(max(p, 0.0), 1.0)


def red_derived_slopes(red: RedParams) -> tuple[float, float]:
    """The two slopes (rho, eta) of the piecewise drop probability."""
    if red.b_max <= red.b_min:
        raise DomainError("b_max must exceed b_min")
    return red.rho, red.eta


def threshold_drop_probability(
    w: float, net: NetworkParams, th: ThresholdParams
) -> float:
    """M/M/1-style drop probability (w / (C*rtt))^q_th, clamped to [0, 1].

    Clamping keeps the fluid right-hand side defined for transient w above
    the bandwidth-delay product.
    """
    if not w > 0:
        raise DomainError(f"window must be > 0, got {w}")
    ratio = w / (net.c_per_flow * net.rtt)
    if ratio >= 1.0:
        return 1.0
    return ratio**th.q_th


def threshold_drop_derivative(
    w: float, net: NetworkParams, th: ThresholdParams
) -> float:
    """d/dw of the threshold drop probability (interior branch)."""
    if not w > 0:
        raise DomainError(f"window must be > 0, got {w}")
    bdp = net.c_per_flow * net.rtt
    ratio = w / bdp
    if ratio >= 1.0:
        return 0.0
    return th.q_th * ratio ** (th.q_th - 1.0) / bdp
