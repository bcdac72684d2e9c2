"""
Run history database
Records every CLI run with its configuration and per-stage timings
"""

import json
import sqlite3

import pandas as pd


class Database:
    def __init__(self, db_path='runs.db'):
        self.db_path = db_path
        self.init_db()

    def init_db(self):
        """Initialize the database with all required tables"""
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        # Runs table
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                subcommand TEXT NOT NULL,
                out_path TEXT,
                seed INTEGER,
                threads INTEGER,
                config_json TEXT,
                status TEXT NOT NULL DEFAULT 'ok',
                error TEXT,
                tool_version TEXT,
                created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
            )
        ''')

        # Stage timings table
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS stage_timings (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id INTEGER NOT NULL,
                stage TEXT NOT NULL,
                seconds REAL NOT NULL,
                FOREIGN KEY (run_id) REFERENCES runs(id)
            )
        ''')

        # Create indexes for performance
        cursor.execute('CREATE INDEX IF NOT EXISTS idx_runs_subcommand ON runs(subcommand, created_at DESC)')
        cursor.execute('CREATE INDEX IF NOT EXISTS idx_timings_run ON stage_timings(run_id)')

        conn.commit()
        conn.close()

    # ========== RUNS ==========

    def save_run(self, subcommand, out_path=None, seed=None, threads=None, config=None,
                 status='ok', error=None, tool_version=None, timings=None):
        """Record a run and its stage timings; returns the run id"""
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        try:
            cursor.execute('''
                INSERT INTO runs (subcommand, out_path, seed, threads, config_json,
                                  status, error, tool_version)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?)
            ''', (subcommand, str(out_path) if out_path is not None else None, seed, threads,
                  json.dumps(config or {}, sort_keys=True, default=str),
                  status, error, tool_version))

            run_id = cursor.lastrowid
            for stage, seconds in (timings or {}).items():
                cursor.execute('''
                    INSERT INTO stage_timings (run_id, stage, seconds)
                    VALUES (?, ?, ?)
                ''', (run_id, stage, float(seconds)))

            conn.commit()
            return run_id
        finally:
            conn.close()

    def get_run(self, run_id):
        """Get a run with its config and timings"""
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        cursor = conn.cursor()

        cursor.execute('SELECT * FROM runs WHERE id = ?', (run_id,))
        row = cursor.fetchone()
        if not row:
            conn.close()
            return None

        cursor.execute('SELECT stage, seconds FROM stage_timings WHERE run_id = ? ORDER BY id', (run_id,))
        timings = {t['stage']: t['seconds'] for t in cursor.fetchall()}
        conn.close()

        run = dict(row)
        run['config'] = json.loads(run.pop('config_json') or '{}')
        run['timings'] = timings
        return run

    def get_runs(self, limit=20, subcommand=None):
        """Most recent runs first"""
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        cursor = conn.cursor()

        if subcommand:
            cursor.execute('''
                SELECT id, subcommand, out_path, seed, threads, status, error, created_at
                FROM runs WHERE subcommand = ?
                ORDER BY id DESC LIMIT ?
            ''', (subcommand, limit))
        else:
            cursor.execute('''
                SELECT id, subcommand, out_path, seed, threads, status, error, created_at
                FROM runs ORDER BY id DESC LIMIT ?
            ''', (limit,))

        runs = [dict(row) for row in cursor.fetchall()]
        conn.close()
        return runs

    # ========== TIMING SUMMARIES ==========

    def get_stage_summary(self, subcommand=None):
        """Median seconds per (subcommand, stage) over successful runs"""
        conn = sqlite3.connect(self.db_path)
        query = '''
            SELECT r.subcommand, t.stage, t.seconds
            FROM stage_timings t JOIN runs r ON r.id = t.run_id
            WHERE r.status = 'ok'
        '''
        params = ()
        if subcommand:
            query += ' AND r.subcommand = ?'
            params = (subcommand,)
        frame = pd.read_sql_query(query, conn, params=params)
        conn.close()

        if frame.empty:
            return pd.DataFrame(columns=['subcommand', 'stage', 'runs', 'median_seconds'])
        summary = (frame.groupby(['subcommand', 'stage'])['seconds']
                   .agg(runs='count', median_seconds='median')
                   .reset_index())
        return summary
