"""Monitor report container and its serialization."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path


def fmt(x: float) -> str:
    """Round-trip decimal representation (17 significant digits)."""
    return format(float(x), ".17g")


@dataclass
class Flag:
    passed: bool
    message: str = ""


@dataclass
class MonitorReport:
    time: list[float] = field(default_factory=list)
    series: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    flags: dict[str, Flag] = field(default_factory=dict)

    def record_time(self, t: float) -> None:
        if self.time and not t > self.time[-1]:
            raise ValueError(f"time axis must increase: {t} after {self.time[-1]}")
        self.time.append(float(t))

    def add(self, name: str, t: float, value: float) -> None:
        points = self.series.setdefault(name, [])
        if points and not t > points[-1][0]:
            raise ValueError(f"series {name!r}: time {t} does not increase past {points[-1][0]}")
        points.append((float(t), float(value)))

    def flag(self, name: str, passed: bool, message: str = "") -> None:
        self.flags[name] = Flag(bool(passed), message)

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.flags.values())

    def values(self, name: str) -> list[float]:
        return [v for _, v in self.series[name]]

    def to_dict(self) -> dict:
        return {
            "time": [fmt(t) for t in self.time],
            "series": {k: [[fmt(t), fmt(v)] for t, v in pts] for k, pts in sorted(self.series.items())},
            "flags": {k: {"passed": f.passed, "message": f.message} for k, f in sorted(self.flags.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MonitorReport":
        rep = cls()
        rep.time = [float(t) for t in data.get("time", [])]
        for name, pts in data.get("series", {}).items():
            rep.series[name] = [(float(t), float(v)) for t, v in pts]
        for name, f in data.get("flags", {}).items():
            rep.flags[name] = Flag(bool(f["passed"]), f.get("message", ""))
        return rep

    def write(self, out_dir: Path, stem: str = "monitors") -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{stem}.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        for name, pts in sorted(self.series.items()):
            with open(out_dir / f"{stem}_{name}.csv", "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["t", name])
                for t, v in pts:
                    writer.writerow([fmt(t), fmt(v)])
