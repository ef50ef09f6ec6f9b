"""
Experiment registry initialization and session management.
Uses SQLAlchemy with SQLite for persistence.
"""

from typing import Iterator, Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, sessionmaker

from app.config import settings
from app.logger import get_logger
from app.models import Base

logger = get_logger(__name__)


def make_engine(database_url: Optional[str] = None) -> Engine:
    url = database_url or settings.database_url
    return create_engine(
        url,
        connect_args={"check_same_thread": False} if url.startswith("sqlite") else {}
    )


# Create engine
engine = make_engine()

# Session factory
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)


def init_db(bind: Optional[Engine] = None):
    """Initialize registry tables."""
    target = bind or engine
    logger.info("Initializing experiment registry", extra={"database_url": str(target.url)})
    Base.metadata.create_all(bind=target)
    logger.info("Experiment registry initialized")


def get_db() -> Iterator[Session]:
    """Yield a registry session and close it afterwards."""
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()
