"""Constraint controllers: augmented-Lagrangian penalty and PID multiplier."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class AugmentedLagrangian:
    """Penalty-method multiplier with nonnegativity projection.

    penalty_and_update evaluates the two-branch penalty for a constraint gap
    delta and projects the multiplier:

        if lam + mu*delta >= 0:  psi = lam*delta + mu/2*delta^2,  lam' = lam + mu*delta
        else:                    psi = -lam^2 / (2*mu),           lam' = 0

    The penalty coefficient grows geometrically via schedule_penalty(). The
    printed floor of 1.0 makes mu jump from its tiny initial value to 1.0 on
    the first update; set mu_floor=0 to keep the pure geometric growth
    instead (both behaviours are supported).
    """

    lam: float = 0.01
    mu: float = 1e-6
    nu: float = 5e-9
    mu_floor: float = 1.0

    def __post_init__(self):
        if self.mu <= 0 or self.nu <= 0:
            raise ValueError("mu and nu must be positive")
        self.lam = max(0.0, self.lam)

    def penalty_and_update(self, delta: float) -> float:
        """Return the penalty value for gap `delta` and update the multiplier."""
        shifted = self.lam + self.mu * delta
        if shifted >= 0.0:
            psi = self.lam * delta + 0.5 * self.mu * delta**2
            self.lam = shifted
        else:
            psi = -self.lam**2 / (2.0 * self.mu)
            self.lam = 0.0
        return psi

    def penalty_value(self, delta: float) -> float:
        """Penalty for gap `delta` without touching the controller state."""
        if self.lam + self.mu * delta >= 0.0:
            return self.lam * delta + 0.5 * self.mu * delta**2
        return -self.lam**2 / (2.0 * self.mu)

    def schedule_penalty(self) -> float:
        """Advance mu by one growth step; returns the new value."""
        self.mu = max(self.mu * (self.nu + 1.0), self.mu_floor)
        return self.mu


@dataclass
class PidLagrangian:
    """PID feedback on the episode-cost error, recomputing the multiplier
    from scratch every episode and clamping it to [0, lam_max]."""

    kp: float = 0.01
    ki: float = 0.1
    kd: float = 0.01
    cost_limit: float = 2.0
    lam_max: float = 0.75
    lam: float = 0.0
    integral: float = 0.0
    prev_cost: float = 0.0

    def update(self, episode_cost: float) -> float:
        """Consume one episode's total cost; returns the new multiplier."""
        if episode_cost < 0:
            raise ValueError("episode cost must be nonnegative")
        d = episode_cost - self.cost_limit
        p = max(0.0, episode_cost - self.prev_cost)
        self.integral = max(0.0, self.integral + d)
        raw = self.kp * p + self.ki * self.integral + self.kd * d
        self.lam = min(max(0.0, raw), self.lam_max)
        self.prev_cost = episode_cost
        return self.lam
