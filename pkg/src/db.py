from __future__ import annotations

import logging
from datetime import datetime
from pathlib import Path

from alembic import command
from alembic.config import Config
from sqlalchemy import (
    Column,
    Date,
    DateTime,
    Float,
    ForeignKey,
    Integer,
    String,
    Text,
    create_engine,
)
from sqlalchemy.engine import Engine
from sqlalchemy.ext.declarative import declarative_base
from sqlalchemy.orm import Session, relationship, sessionmaker

from campaign import CampaignRecord, CampaignResult, FailureRecord
from exceptions import ContractError

logger = logging.getLogger(__name__)

MIGRATIONS_DIR = Path(__file__).parent / "alembic"

Base = declarative_base()


class RunRow(Base):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True)
    created_at = Column(DateTime, nullable=False, default=datetime.utcnow)
    config_hash = Column(String(64), nullable=False)
    version = Column(String(32), nullable=False)
    manifest = Column(Text, nullable=False)

    records = relationship("RecordRow", back_populates="run", cascade="all, delete-orphan")
    failures = relationship("FailureRow", back_populates="run", cascade="all, delete-orphan")

    def __str__(self) -> str:
        return f"RunRow(id={self.id}, config_hash={self.config_hash[:12]})"

    def __repr__(self) -> str:
        return str(self)


class RecordRow(Base):
    __tablename__ = "records"

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("runs.id"), nullable=False, index=True)
    date = Column(Date, nullable=False)
    device = Column(String, nullable=False)
    location = Column(String, nullable=False)
    mode = Column(String, nullable=False)
    status = Column(String, nullable=False)
    r_arb = Column(Float)
    r_reg = Column(Float)
    total = Column(Float)
    initial_soc = Column(Float, nullable=False)
    terminal_soc = Column(Float)
    iterations = Column(Integer, default=0, nullable=False)

    run = relationship("RunRow", back_populates="records")

    def __str__(self) -> str:
        return (
            f"RecordRow({self.date} {self.device} {self.location} {self.mode} "
            f"status={self.status})"
        )

    def __repr__(self) -> str:
        return str(self)


class FailureRow(Base):
    __tablename__ = "failures"

    id = Column(Integer, primary_key=True)
    run_id = Column(Integer, ForeignKey("runs.id"), nullable=False, index=True)
    date = Column(Date, nullable=False)
    device = Column(String, nullable=False)
    location = Column(String, nullable=False)
    mode = Column(String, nullable=False)
    reason = Column(Text, nullable=False)

    run = relationship("RunRow", back_populates="failures")


def _nullable(value: float) -> float | None:
    # NaN goes in as NULL
    return None if value != value else value


def _float(value: float | None) -> float:
    return float("nan") if value is None else float(value)


def migrate(url: str) -> None:
    config = Config()
    config.set_main_option("script_location", str(MIGRATIONS_DIR))
    config.set_main_option("sqlalchemy.url", url)
    command.upgrade(config, "head")


def open_store(path: str | Path) -> sessionmaker:
    """Session factory for a SQLite record store, created or upgraded to the
    latest schema on the way."""
    url = f"sqlite:///{Path(path)}"
    migrate(url)
    engine: Engine = create_engine(url)
    return sessionmaker(bind=engine)


def save_result(
    session: Session, result: CampaignResult, manifest: str, config_hash: str, version: str
) -> int:
    run = RunRow(config_hash=config_hash, version=version, manifest=manifest)
    run.records = [
        RecordRow(
            date=record.date,
            device=record.device,
            location=record.location,
            mode=record.mode,
            status=record.status,
            r_arb=_nullable(record.r_arb),
            r_reg=_nullable(record.r_reg),
            total=_nullable(record.total),
            initial_soc=record.initial_soc,
            terminal_soc=_nullable(record.terminal_soc),
            iterations=record.iterations,
        )
        for record in result.records
    ]
    run.failures = [
        FailureRow(
            date=failure.date,
            device=failure.device,
            location=failure.location,
            mode=failure.mode,
            reason=failure.reason,
        )
        for failure in result.failures
    ]
    session.add(run)
    session.commit()
    logger.info("Stored run %d with %d record(s)", run.id, len(result.records))
    return int(run.id)


def load_result(session: Session, run_id: int) -> CampaignResult:
    run = session.query(RunRow).get(run_id)
    if run is None:
        raise ContractError(f"run {run_id} not found in the record store", module="campaign")

    rows = sorted(run.records, key=lambda r: (r.date, r.device, r.location, r.mode))
    records = [
        CampaignRecord(
            date=row.date,
            device=row.device,
            location=row.location,
            mode=row.mode,
            status=row.status,
            r_arb=_float(row.r_arb),
            r_reg=_float(row.r_reg),
            total=_float(row.total),
            initial_soc=row.initial_soc,
            terminal_soc=_float(row.terminal_soc),
            iterations=row.iterations,
        )
        for row in rows
    ]
    failures = [
        FailureRecord(row.date, row.device, row.location, row.mode, row.reason)
        for row in sorted(run.failures, key=lambda r: (r.date, r.device, r.location, r.mode))
    ]
    return CampaignResult(records, failures)


def latest_run_id(session: Session) -> int | None:
    run = session.query(RunRow).order_by(RunRow.id.desc()).first()
    return None if run is None else int(run.id)
