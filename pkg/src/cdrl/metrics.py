"""Line-delimited JSON metrics and learning-curve export."""
from __future__ import annotations

import csv
import io
import json
import threading
from pathlib import Path

FIELDS = (
    "kind", "role", "wall_time_s", "global_step", "worker_id", "episode_index", "episode_reward",
    "policy_loss", "value_loss", "entropy", "distill_loss", "align_loss", "align_epoch",
)


class MetricsWriter:
    """Appends one JSON object per line; safe to share between threads."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "a", encoding="utf-8")
        self._lock = threading.Lock()

    def write(self, record):
        line = json.dumps(record) + "\n"
        with self._lock:
            self._fh.write(line)
            self._fh.flush()

    def close(self):
        with self._lock:
            if not self._fh.closed:
                self._fh.close()


def read_metrics(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no metrics file at {path}")
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def smooth(values, factor=0.9):
    """Exponential smoothing seeded with the first value: ``s = f s + (1 - f) r``."""
    out = []
    s = None
    for r in values:
        s = r if s is None else factor * s + (1 - factor) * r
        out.append(s)
    return out


def plotdata(records, factor=0.9, label=None) -> str:
    """CSV ``mode,role,global_step,smoothed_reward`` sorted by global step per role."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "role", "global_step", "smoothed_reward"])
    by_role = {}
    for r in records:
        if r.get("kind") == "episode":
            by_role.setdefault(r.get("role", "student"), []).append(r)
    for role in sorted(by_role):
        rows = sorted(by_role[role], key=lambda r: r["global_step"])
        for r, s in zip(rows, smooth([r["episode_reward"] for r in rows], factor)):
            w.writerow([label or "", role, r["global_step"], repr(float(s))])
    return buf.getvalue()
