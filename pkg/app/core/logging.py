import logging

from rich.console import Console
from rich.logging import RichHandler

from app.core.config import LOG_LEVEL

_configured = False


def setup_logging(level: str | None = None) -> None:
    global _configured
    level = (level or LOG_LEVEL).upper()
    root = logging.getLogger("app")
    root.setLevel(level)
    if _configured:
        return
    handler = RichHandler(
        console=Console(stderr=True),
        show_path=False,
        rich_tracebacks=True,
    )
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    root.addHandler(handler)
    root.propagate = False
    _configured = True
