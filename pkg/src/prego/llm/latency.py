from __future__ import annotations

import threading
from collections import defaultdict
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LatencySample:
    scheme: str
    video_id: str
    step_index: int
    call_latencies: tuple[float, ...]

    @property
    def seconds(self) -> float:
        # An ACoT sample costs both of its calls.
        return float(sum(self.call_latencies))


class LatencyLog:
    """Collects per-sample completion latencies, grouped by prompting scheme."""

    def __init__(self):
        self._samples: list[LatencySample] = []
        self._lock = threading.Lock()

    def record(self, scheme: str, video_id: str, step_index: int, call_latencies) -> LatencySample:
        sample = LatencySample(scheme, video_id, step_index, tuple(float(x) for x in call_latencies))
        with self._lock:
            self._samples.append(sample)
        return sample

    def __len__(self) -> int:
        return len(self._samples)

    def summary(self) -> dict[str, dict]:
        groups: dict[str, list[float]] = defaultdict(list)
        calls: dict[str, int] = defaultdict(int)
        with self._lock:
            for s in self._samples:
                groups[s.scheme].append(s.seconds)
                calls[s.scheme] += len(s.call_latencies)
        out = {}
        for scheme in sorted(groups):
            values = np.asarray(groups[scheme])
            out[scheme] = {
                "samples": len(values),
                "calls": calls[scheme],
                "mean_s": float(values.mean()),
                "p50_s": float(np.percentile(values, 50)),
                "p90_s": float(np.percentile(values, 90)),
                "max_s": float(values.max()),
            }
        return out
