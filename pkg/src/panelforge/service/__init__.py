from panelforge.service.app import ServiceSettings, create_app
from panelforge.service.jobs import GenerationExecutor, QueueFullError
from panelforge.service.store import CharacterRecord, JobRecord, ServiceStore, UnsupportedImageError

__all__ = [
    "ServiceSettings",
    "create_app",
    "GenerationExecutor",
    "QueueFullError",
    "CharacterRecord",
    "JobRecord",
    "ServiceStore",
    "UnsupportedImageError",
]
