import os
from logging.config import fileConfig

from sqlalchemy import create_engine

from alembic import context
from db import Base

# this is the Alembic Config object, which provides
# access to the values within the .ini file in use.
config = context.config

# open_store() configures alembic in code, without an .ini file
if config.config_file_name is not None:
    fileConfig(config.config_file_name, disable_existing_loggers=False)

target_metadata = Base.metadata


def get_db_url():
    url = config.get_main_option("sqlalchemy.url")
    if url:
        return url
    return f"sqlite:///{os.environ.get('ESSREV_DB', 'runs.db')}"


def run_migrations_offline():
    """Emit the migration SQL instead of applying it."""
    context.configure(
        url=get_db_url(),
        target_metadata=target_metadata,
        literal_binds=True,
        render_as_batch=True,
        dialect_opts={"paramstyle": "named"},
    )

    with context.begin_transaction():
        context.run_migrations()


def run_migrations_online():
    connectable = create_engine(get_db_url())

    with connectable.connect() as connection:
        # SQLite cannot ALTER most columns in place
        context.configure(
            connection=connection, target_metadata=target_metadata, render_as_batch=True
        )

        with context.begin_transaction():
            context.run_migrations()


if context.is_offline_mode():
    run_migrations_offline()
else:
    run_migrations_online()
