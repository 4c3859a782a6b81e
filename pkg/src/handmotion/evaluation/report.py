"""Bootstrap metric reports: value, mean, and 95% half-width over repeats."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ValidationError


@dataclass
class MetricValue:
    name: str
    mean: float
    half_width: float
    values: list[float]

    def __str__(self) -> str:
        return f"{self.mean:.4f} ± {self.half_width:.4f}"


def bootstrap_metric(fn, n_repeats: int = 20, seed: int = 0, name: str = "") -> MetricValue:
    """Run ``fn(rng)`` n_repeats times; 95% interval via the normal approximation."""
    if n_repeats < 2:
        raise ValidationError("confidence intervals need at least 2 repeats")
    values = [float(fn(np.random.default_rng((seed, rep)))) for rep in range(n_repeats)]
    arr = np.asarray(values)
    half = 1.96 * arr.std(ddof=1) / np.sqrt(n_repeats)
    return MetricValue(name=name, mean=float(arr.mean()), half_width=float(half), values=values)


@dataclass
class MetricReport:
    task: str
    metrics: dict[str, MetricValue] = field(default_factory=dict)
    evaluator_fingerprint: str = ""
    extra: dict = field(default_factory=dict)

    def add(self, value: MetricValue) -> None:
        self.metrics[value.name] = value

    def to_json(self, path: str | Path | None = None) -> str:
        payload = {
            "task": self.task,
            "evaluator_fingerprint": self.evaluator_fingerprint,
            "metrics": {
                name: {
                    "mean": mv.mean,
                    "half_width": mv.half_width,
                    "values": mv.values,
                }
                for name, mv in self.metrics.items()
            },
            **self.extra,
        }
        text = json.dumps(payload, indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_csv(self, path: str | Path, columns: list[str] | None = None) -> None:
        columns = columns or list(self.metrics)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(columns)
            writer.writerow(
                [
                    f"{self.metrics[c].mean:.4f} ± {self.metrics[c].half_width:.4f}"
                    if c in self.metrics
                    else ""
                    for c in columns
                ]
            )


T2M_COLUMNS = ["RP3", "MMD", "KID", "Div", "MM"]
M2T_COLUMNS = ["RP3", "B4", "B1", "RG"]
