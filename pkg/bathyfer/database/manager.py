import logging
import sqlite3
from pathlib import Path
from typing import Dict, List, Optional, Union

import pandas as pd

from bathyfer.core.errors import InputError
from bathyfer.models.models import ChainStats

logger = logging.getLogger(__name__)

LEDGER_NAME = "ledger.sqlite"


class RunLedger:
    """sqlite record of runs, their chains and their metrics inside an output directory"""

    def __init__(self, db_path: Union[str, Path]):
        self.db_path = str(db_path)
        Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
        self.init_database()

    @classmethod
    def in_directory(cls, directory: Union[str, Path]) -> "RunLedger":
        return cls(Path(directory) / LEDGER_NAME)

    def init_database(self):
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.cursor()
            cursor.execute("PRAGMA foreign_keys = ON")
            cursor.execute('''
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    command TEXT NOT NULL,
                    config_hash TEXT NOT NULL,
                    seed INTEGER,
                    version TEXT NOT NULL,
                    space TEXT,
                    status TEXT NOT NULL DEFAULT 'running'
                )
            ''')
            cursor.execute('''
                CREATE TABLE IF NOT EXISTS chains (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id INTEGER NOT NULL,
                    chain_index INTEGER NOT NULL,
                    seed INTEGER NOT NULL,
                    n_samples INTEGER NOT NULL,
                    burn_in INTEGER NOT NULL,
                    acceptance_rate REAL,
                    mean_log_posterior REAL,
                    final_scale REAL,
                    kept BOOLEAN NOT NULL,
                    FOREIGN KEY (run_id) REFERENCES runs (id)
                )
            ''')
            cursor.execute('''
                CREATE TABLE IF NOT EXISTS metrics (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id INTEGER NOT NULL,
                    metric TEXT NOT NULL,
                    value REAL,
                    FOREIGN KEY (run_id) REFERENCES runs (id)
                )
            ''')

            indexes = [
                "CREATE INDEX IF NOT EXISTS idx_chains_run ON chains(run_id, chain_index)",
                "CREATE INDEX IF NOT EXISTS idx_metrics_run ON metrics(run_id, metric)",
            ]
            for index in indexes:
                cursor.execute(index)
            conn.commit()
        logger.debug(f"ledger ready at {self.db_path}")

    def start_run(self, command: str, config_hash: str, seed: Optional[int], version: str, space: Optional[str] = None) -> int:
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.cursor()
            cursor.execute('''
                INSERT INTO runs (command, config_hash, seed, version, space)
                VALUES (?, ?, ?, ?, ?)
            ''', (command, config_hash, seed, version, space))
            conn.commit()
            return int(cursor.lastrowid)

    def finish_run(self, run_id: int, status: str):
        with sqlite3.connect(self.db_path) as conn:
            conn.execute("UPDATE runs SET status = ? WHERE id = ?", (status, run_id))
            conn.commit()

    def log_chains(self, run_id: int, stats: List[ChainStats]):
        with sqlite3.connect(self.db_path) as conn:
            conn.executemany('''
                INSERT INTO chains
                (run_id, chain_index, seed, n_samples, burn_in, acceptance_rate, mean_log_posterior, final_scale, kept)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
            ''', [
                (
                    run_id, s.chain_index, s.seed, s.n_samples, s.burn_in,
                    s.acceptance_rate, s.mean_log_posterior, s.final_scale, s.kept,
                )
                for s in stats
            ])
            conn.commit()

    def log_metrics(self, run_id: int, metrics: Dict[str, float]):
        with sqlite3.connect(self.db_path) as conn:
            conn.executemany(
                "INSERT INTO metrics (run_id, metric, value) VALUES (?, ?, ?)",
                [(run_id, name, float(value)) for name, value in metrics.items()],
            )
            conn.commit()

    def latest_run(self, command: Optional[str] = None, status: Optional[str] = None) -> Dict:
        clauses, params = [], []
        if command is not None:
            clauses.append("command = ?")
            params.append(command)
        if status is not None:
            clauses.append("status = ?")
            params.append(status)
        query = "SELECT * FROM runs"
        if clauses:
            query += " WHERE " + " AND ".join(clauses)
        query += " ORDER BY id DESC LIMIT 1"
        with sqlite3.connect(self.db_path) as conn:
            runs = pd.read_sql_query(query, conn, params=params)
        if len(runs) == 0:
            raise InputError(f"ledger {self.db_path} has no {command or ''} run recorded")
        return runs.iloc[0].to_dict()

    def chains_frame(self, run_id: int) -> pd.DataFrame:
        with sqlite3.connect(self.db_path) as conn:
            return pd.read_sql_query('''
                SELECT chain_index, seed, n_samples, burn_in, acceptance_rate,
                       mean_log_posterior, final_scale, kept
                FROM chains WHERE run_id = ? ORDER BY chain_index
            ''', conn, params=(run_id,))

    def metrics_frame(self, run_id: int) -> pd.DataFrame:
        with sqlite3.connect(self.db_path) as conn:
            return pd.read_sql_query(
                "SELECT metric, value FROM metrics WHERE run_id = ? ORDER BY id", conn, params=(run_id,)
            )
