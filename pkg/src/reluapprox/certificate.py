"""Per-stage error budgets for constructed networks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

CERTIFIED = "certified"
MEASURED = "measured"


@dataclass(frozen=True)
class Stage:
    name: str
    budget: float
    achieved: float


@dataclass(frozen=True)
class ApproxCertificate:
    """Error budget of a construction.

    In ``certified`` mode every ``achieved`` value is an analytic or exact
    upper bound and the invariant ``sum(achieved) <= sum(budget) <= eps``
    holds; ``measured`` certificates carry empirical values only.
    """

    requested_eps: float
    stages: tuple
    mode: str = CERTIFIED
    details: dict = field(default_factory=dict)

    @property
    def total_budget(self):
        return math.fsum(s.budget for s in self.stages)

    @property
    def total_achieved(self):
        return math.fsum(s.achieved for s in self.stages)

    def is_sound(self):
        return (self.mode == CERTIFIED
                and self.total_achieved <= self.total_budget <= self.requested_eps)

    def to_dict(self):
        return {
            "requested_eps": self.requested_eps,
            "stage_names": [s.name for s in self.stages],
            "stage_budgets": [s.budget for s in self.stages],
            "stage_achieved": [s.achieved for s in self.stages],
            "total_achieved": self.total_achieved,
            "mode": self.mode,
            "details": self.details,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)
