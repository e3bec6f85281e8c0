"""Structured pass/fail results for quantitative property checks."""

from dataclasses import dataclass, field


@dataclass
class VerdictReport:
    """Outcome of one property check with its measured violation magnitude."""

    name: str
    passed: bool
    worst_violation: float
    tolerance: float
    details: dict = field(default_factory=dict)

    def __bool__(self):
        return self.passed

    def summary(self):
        state = "pass" if self.passed else "FAIL"
        return (f"{self.name}: {state} (worst violation {self.worst_violation:.3e}, "
                f"tolerance {self.tolerance:.3e})")
