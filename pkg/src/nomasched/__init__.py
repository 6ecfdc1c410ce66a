"""Online grouping, scheduling and power allocation for uplink NOMA IoT networks."""

from .model import (DeviceProfile, FrameDemand, Instance, NomaGroup, Schedule, Violation,
                    compute_rate, count_served, export_ilp, group_feasible, validate_schedule)
from .scenario import ScenarioParams, generate_instance, load_instance, save_instance

__version__ = "0.1.0"

__all__ = [
    "DeviceProfile", "FrameDemand", "Instance", "NomaGroup", "Schedule", "Violation",
    "compute_rate", "count_served", "export_ilp", "group_feasible", "validate_schedule",
    "ScenarioParams", "generate_instance", "load_instance", "save_instance",
]
