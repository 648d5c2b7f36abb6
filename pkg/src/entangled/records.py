"""Run records and their on-disk formats.

A record is persisted as a zip archive (readable with ``numpy.load``) whose
members are written with a fixed timestamp, so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .params import EconomyParams

SERIES_COLUMNS = ("iteration", "gdp", "n_companies", "births", "deaths", "resources")
RECORD_VERSION = 1
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


@dataclass
class Snapshot:
    iteration: int
    ids: np.ndarray
    positions: np.ndarray
    capital: np.ndarray
    birth: np.ndarray

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def ages(self) -> np.ndarray:
        return self.iteration - self.birth

    def rows(self):
        for k in range(self.n):
            yield {"id": int(self.ids[k]), "position": [int(v) for v in self.positions[k]],
                   "capital": float(self.capital[k]), "age": int(self.iteration - self.birth[k])}

    def write_csv(self, path) -> None:
        L = self.positions.shape[1] if self.positions.ndim == 2 else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", *[f"t{j + 1}" for j in range(L)], "capital", "age"])
            for row in self.rows():
                w.writerow([row["id"], *row["position"], repr(row["capital"]), row["age"]])

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps({"iteration": self.iteration, "companies": list(self.rows())}))


@dataclass
class RunRecord:
    """Per-iteration series plus periodic snapshots of one run.

    ``series`` has one row per completed iteration and the columns of
    :data:`SERIES_COLUMNS`.
    """

    params: EconomyParams
    seed: int
    series: np.ndarray
    snapshots: list[Snapshot] = field(default_factory=list)
    collapsed: bool = False
    final_iteration: int = 0
    kernel_digest: str = ""

    @property
    def params_digest(self) -> str:
        return self.params.digest(self.seed)

    def column(self, name: str) -> np.ndarray:
        return self.series[:, SERIES_COLUMNS.index(name)]

    @property
    def gdp(self) -> np.ndarray:
        return self.column("gdp")

    @property
    def n_companies(self) -> np.ndarray:
        return self.column("n_companies")

    def snapshot_at(self, iteration: int) -> Snapshot:
        for snap in self.snapshots:
            if snap.iteration == iteration:
                return snap
        raise KeyError(f"no snapshot at iteration {iteration}")

    # -- serialisation ----------------------------------------------------

    def meta(self) -> dict:
        return {
            "version": RECORD_VERSION,
            "params": self.params.to_dict(),
            "seed": self.seed,
            "params_digest": self.params_digest,
            "collapsed": self.collapsed,
            "final_iteration": self.final_iteration,
            "kernel_digest": self.kernel_digest,
        }

    def _arrays(self) -> dict[str, np.ndarray]:
        snaps = self.snapshots
        L = self.params.L
        offsets = np.cumsum([0] + [s.n for s in snaps]).astype(np.int64)
        cat = (lambda parts, dtype, shape: np.concatenate(parts).astype(dtype) if parts
               else np.zeros(shape, dtype=dtype))
        return {
            "series": np.ascontiguousarray(self.series, dtype=np.float64),
            "snap_iteration": np.array([s.iteration for s in snaps], dtype=np.int64),
            "snap_offsets": offsets,
            "snap_ids": cat([s.ids for s in snaps], np.int64, (0,)),
            "snap_positions": cat([s.positions for s in snaps], np.int64, (0, L)),
            "snap_capital": cat([s.capital for s in snaps], np.float64, (0,)),
            "snap_birth": cat([s.birth for s in snaps], np.int64, (0,)),
        }

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            info = zipfile.ZipInfo("meta.json", date_time=_ZIP_DATE)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, json.dumps(self.meta(), sort_keys=True))
            for name, arr in self._arrays().items():
                member = io.BytesIO()
                np.lib.format.write_array(member, arr, allow_pickle=False)
                info = zipfile.ZipInfo(f"{name}.npy", date_time=_ZIP_DATE)
                info.compress_type = zipfile.ZIP_DEFLATED
                zf.writestr(info, member.getvalue())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "RunRecord":
        with zipfile.ZipFile(io.BytesIO(data)) as zf:
            meta = json.loads(zf.read("meta.json"))
            arrays = {name[:-4]: np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
                      for name in zf.namelist() if name.endswith(".npy")}
        off = arrays["snap_offsets"]
        snaps = [Snapshot(int(it), arrays["snap_ids"][off[k]:off[k + 1]],
                          arrays["snap_positions"][off[k]:off[k + 1]],
                          arrays["snap_capital"][off[k]:off[k + 1]],
                          arrays["snap_birth"][off[k]:off[k + 1]])
                 for k, it in enumerate(arrays["snap_iteration"])]
        return cls(params=EconomyParams.from_dict(meta["params"]), seed=meta["seed"],
                   series=arrays["series"].reshape(-1, len(SERIES_COLUMNS)), snapshots=snaps,
                   collapsed=meta["collapsed"], final_iteration=meta["final_iteration"],
                   kernel_digest=meta["kernel_digest"])

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "RunRecord":
        return cls.from_bytes(Path(path).read_bytes())

    def write_series_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# params_digest={self.params_digest} seed={self.seed}\n")
            w = csv.writer(fh)
            w.writerow(SERIES_COLUMNS)
            for row in self.series:
                w.writerow([int(row[0]), repr(float(row[1])), *(int(v) for v in row[2:])])
