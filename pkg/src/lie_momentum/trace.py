"""Per-iteration records and their CSV / JSON serialization."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

COLUMNS = ("k", "t", "U", "subopt", "xi_norm", "energy", "lyapunov", "dist")


@dataclass
class RunTrace:
    """Per-iteration diagnostics of one trajectory.

    Every array has one entry per recorded iterate (index 0 is the initial
    state). ``k`` holds the iteration numbers, which are not contiguous when
    the trace was decimated. ``states`` optionally keeps the raw (g, xi,
    prev_grad) matrices so diagnostics can be recomputed offline.
    """

    k: np.ndarray
    U: np.ndarray
    subopt: np.ndarray
    xi_norm: np.ndarray
    energy: np.ndarray
    lyapunov: np.ndarray
    dist: np.ndarray
    t: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    states: list[dict] | None = None

    def __len__(self) -> int:
        return len(self.k)

    @property
    def lyapunov_ratio(self) -> np.ndarray:
        """L_{k+1} / L_k, NaN-padded in front to align with the iterates."""
        L = self.lyapunov
        with np.errstate(divide="ignore", invalid="ignore"):
            r = L[1:] / L[:-1]
        return np.concatenate([[np.nan], r])

    def decimate(self, max_rows: int) -> RunTrace:
        """Keep at most ``max_rows`` rows, always including the first and last."""
        if len(self) <= max_rows:
            return self
        idx = np.unique(np.linspace(0, len(self) - 1, max_rows).round().astype(int))
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return RunTrace(k=self.k[idx], U=self.U[idx], subopt=self.subopt[idx], xi_norm=self.xi_norm[idx],
                        energy=self.energy[idx], lyapunov=self.lyapunov[idx], dist=self.dist[idx],
                        t=pick(self.t), meta=dict(self.meta), states=None)

    # -- serialization ------------------------------------------------------

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS + ("ratio",))
        t = self.t if self.t is not None else np.full(len(self), np.nan)
        ratio = self.lyapunov_ratio
        for row in zip(self.k, t, self.U, self.subopt, self.xi_norm, self.energy, self.lyapunov,
                       self.dist, ratio):
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()

    def to_dict(self, include_states: bool = True) -> dict:
        out = {name: _floats(getattr(self, name)) for name in
               ("U", "subopt", "xi_norm", "energy", "lyapunov", "dist")}
        out["k"] = [int(v) for v in self.k]
        out["t"] = None if self.t is None else _floats(self.t)
        out["meta"] = self.meta
        if include_states and self.states is not None:
            out["states"] = [{key: (None if v is None else np.asarray(v).ravel().tolist())
                              for key, v in s.items()} for s in self.states]
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> RunTrace:
        arr = lambda key: np.array([np.nan if v is None else v for v in obj[key]], dtype=np.float64)  # noqa: E731
        states = None
        if obj.get("states") is not None:
            states = []
            for s in obj["states"]:
                rec = {}
                for key, v in s.items():
                    if v is None:
                        rec[key] = None
                    else:
                        a = np.array(v, dtype=np.float64)
                        m = int(round(np.sqrt(a.size)))
                        rec[key] = a.reshape(m, m)
                states.append(rec)
        return cls(k=np.array(obj["k"], dtype=np.int64), U=arr("U"), subopt=arr("subopt"),
                   xi_norm=arr("xi_norm"), energy=arr("energy"), lyapunov=arr("lyapunov"),
                   dist=arr("dist"), t=None if obj.get("t") is None else arr("t"),
                   meta=obj.get("meta", {}), states=states)


def _floats(a) -> list:
    # NaN is not valid JSON; store it as null
    return [None if not np.isfinite(v) else float(v) for v in np.asarray(a, dtype=np.float64)]


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    """Write through a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    return path


def atomic_write_json(path: str | os.PathLike, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=False) + "\n")
