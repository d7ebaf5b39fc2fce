from .ledger import Ledger, LedgerEvent, ledger_verify, load_events
from .state import (
    NodeRecord,
    OrchestratorCore,
    TaskSpec,
    build_invite,
    verify_invite,
)
from .storage import RolloutStorage
from .service import OrchestratorService, create_orchestrator_app

__all__ = [
    "Ledger", "LedgerEvent", "ledger_verify", "load_events", "NodeRecord",
    "OrchestratorCore", "TaskSpec", "build_invite", "verify_invite",
    "RolloutStorage", "OrchestratorService", "create_orchestrator_app",
]
