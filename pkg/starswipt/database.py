"""
Results database: one SQLite file per output directory
"""

from contextlib import contextmanager
from pathlib import Path
from typing import Generator, Iterable, Optional, Union

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import sessionmaker
from sqlmodel import Session, SQLModel, select

from starswipt.core.config import settings
# Import models so their tables are registered
from starswipt.models import RunRecord
from starswipt.schemas.experiment import ExperimentResult


def database_url(out_dir: Union[str, Path]) -> str:
    return f"sqlite:///{Path(out_dir) / settings.results_db_name}"


def make_engine(out_dir: Union[str, Path]) -> Engine:
    return create_engine(
        database_url(out_dir),
        connect_args={"check_same_thread": False},
        echo=settings.debug,
    )


def create_tables(engine: Engine) -> None:
    SQLModel.metadata.create_all(bind=engine)


@contextmanager
def get_db(engine: Engine) -> Generator[Session, None, None]:
    """Session bound to engine; rolled back on error, always closed"""
    factory = sessionmaker(bind=engine, class_=Session, autocommit=False, autoflush=False)
    db = factory()
    try:
        yield db
        db.commit()
    except Exception:
        db.rollback()
        raise
    finally:
        db.close()


def init_db(out_dir: Union[str, Path]) -> Engine:
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    engine = make_engine(out_dir)
    create_tables(engine)
    return engine


def store_result(engine: Engine, result: ExperimentResult, run_label: str) -> int:
    """Insert every record of a run; returns the number of rows written"""
    rows = [
        RunRecord(
            run_label=run_label,
            sweep_key=result.sweep_key,
            sweep_value=r.sweep_value,
            realization=r.realization,
            outer_iter=r.outer_iter,
            r_sec=r.r_sec,
            sum_rate=r.sum_rate,
            energy_worst=r.energy_worst,
            feasible=r.feasible,
            eps_ratio=r.eps_ratio,
            wall_ms=r.wall_ms,
            rank_incomplete=r.rank_incomplete,
        )
        for r in result.records
    ]
    with get_db(engine) as db:
        db.add_all(rows)
    return len(rows)


def load_records(engine: Engine, run_label: Optional[str] = None) -> Iterable[RunRecord]:
    with get_db(engine) as db:
        query = select(RunRecord)
        if run_label is not None:
            query = query.where(RunRecord.run_label == run_label)
        rows = db.exec(query.order_by(RunRecord.id)).all()
        db.expunge_all()
        return rows
