from .core import Round, RoundState, Session, SessionManager, Snapshot
from .sheets import export_sheet, import_sheet
from .store import SessionStore

__all__ = [
    "Round",
    "RoundState",
    "Session",
    "SessionManager",
    "Snapshot",
    "SessionStore",
    "export_sheet",
    "import_sheet",
]
