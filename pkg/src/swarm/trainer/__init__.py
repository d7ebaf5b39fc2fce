from .collector import CollectResult, GroupData, collect_step
from .loop import METRIC_COLUMNS, MetricsLog, TrainHalt, TrainerLoop, reward_summary
from .steps import StepLedger, StepStatus

__all__ = [
    "CollectResult", "GroupData", "collect_step", "METRIC_COLUMNS",
    "MetricsLog", "TrainHalt", "TrainerLoop", "reward_summary",
    "StepLedger", "StepStatus",
]
