# Per-slice metric tables with aggregate rows, exported as JSON, CSV and a printable table

from __future__ import annotations
import json
import math
from dataclasses import dataclass, field
import pandas as pd
from .metrics import SliceMetrics

METRICS = ("psnr", "ssim", "mae", "pcc")
PERFECT = "perfect"

def _jsonable(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    if isinstance(value, float) and math.isinf(value):
        return PERFECT if value > 0 else "-inf"
    return value

@dataclass
class MetricReport:
    """Per-slice metrics for one or more methods (e.g. the model and the zero-filled baseline)"""
    rows: list[dict] = field(default_factory=list)

    def add(self, method: str, slice_id: str, metrics: SliceMetrics):
        self.rows.append({"method": method, "slice_id": slice_id, **metrics.to_dict()})

    @property
    def frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.rows, columns=["method", "slice_id", *METRICS])
        for m in METRICS:
            df[m] = pd.to_numeric(df[m], errors="coerce")
        return df

    @property
    def methods(self) -> list[str]:
        return list(dict.fromkeys(r["method"] for r in self.rows))

    def aggregate(self) -> pd.DataFrame:
        """Mean and population std of every metric per method. Missing values (e.g. no PCC) are skipped."""
        df = self.frame
        if df.empty:
            raise ValueError("Cannot aggregate an empty report")
        grouped = df.groupby("method", sort=False)[list(METRICS)]
        mean = grouped.mean()
        std = grouped.std(ddof=0)
        out = pd.concat({"mean": mean, "std": std}, axis=1)
        out.columns = [f"{metric}_{stat}" for stat, metric in out.columns]
        return out[[f"{m}_{s}" for m in METRICS for s in ("mean", "std")]]

    def table(self) -> str:
        agg = self.aggregate()
        lines = []
        for method, row in agg.iterrows():
            cells = [f"{method:<12}"]
            for m in METRICS:
                mean, std = row[f"{m}_mean"], row[f"{m}_std"]
                if pd.isna(mean):
                    cells.append(f"{m}: n/a")
                elif math.isinf(mean):
                    cells.append(f"{m}: {PERFECT}")
                else:
                    cells.append(f"{m}: {mean:.4f} ± {std:.4f}")
            lines.append("  ".join(cells))
        return "\n".join(lines)

    def to_csv(self, path: str):
        self.frame.to_csv(path, index=False)

    def to_dict(self) -> dict:
        agg = self.aggregate()
        return {
            "per_slice": [{k: _jsonable(v) for k, v in r.items()} for r in self.rows],
            "aggregate": {
                str(method): {k: _jsonable(float(v)) for k, v in row.items()}
                for method, row in agg.iterrows()
            },
        }

    def to_json(self, path: str):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

