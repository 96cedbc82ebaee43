"""
Run logging for the CLI.

One session per process: a plain-text log and a JSON ledger with one record
per command run, both named after the session timestamp.
"""

import json
import sys
from collections import Counter
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO


class ExperimentLogger:
    """
    Session log plus JSON ledger of pipeline runs.

    Messages are echoed to stderr; stdout belongs to the command summaries.
    """

    def __init__(self, log_dir: str = "results/logs", echo: Optional[TextIO] = None):
        """
        Args:
            log_dir: Directory for the session files, created if missing
            echo: Stream messages are echoed to (default: stderr)
        """
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.session_id = datetime.now().strftime("%Y%m%d_%H%M%S_%f")
        self.log_file = self.log_dir / f"rrpn_{self.session_id}.log"
        self.json_file = self.log_dir / f"rrpn_{self.session_id}.json"
        self.echo = echo if echo is not None else sys.stderr
        self.runs: List[Dict[str, Any]] = []

    def log(self, message: str):
        stamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
        with open(self.log_file, 'a') as f:
            for line in message.splitlines() or ['']:
                f.write(f"[{stamp}] {line}\n")
        print(message, file=self.echo)

    def record_experiment(self, name: str, parameters: Dict[str, Any], results: Dict[str, Any]):
        """
        Append one run to the ledger and rewrite the ledger file.

        Values JSON cannot encode (paths, numpy scalars) are stored as strings.
        """
        self.runs.append({
            'name': name,
            'timestamp': datetime.now().isoformat(),
            'parameters': dict(parameters),
            'results': dict(results),
        })
        with open(self.json_file, 'w') as f:
            json.dump({'session_id': self.session_id, 'runs': self.runs}, f, indent=2, default=str)
        self.log(f"Recorded {name} run #{len(self.runs)}")

    def get_summary(self) -> str:
        counts = Counter(run['name'] for run in self.runs)
        commands = ", ".join(f"{name} x{n}" for name, n in sorted(counts.items())) or "none"
        return (
            f"Session {self.session_id}: {len(self.runs)} run(s) ({commands})\n"
            f"Log: {self.log_file}\n"
            f"Ledger: {self.json_file}"
        )
