"""Multi-class streaming traffic: service classes, resource demands and the
stationary law of the user configuration."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# Relative tolerance under which two resource demands are treated as equal.
_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class RadioLink:
    """Shannon-gap coefficient and bandwidth of the orthogonal user channels."""

    gamma: float = 0.5
    bandwidth_hz: float = 10e6

    def __post_init__(self):
        if not self.gamma > 0 or not self.bandwidth_hz > 0:
            raise ValueError("gamma and bandwidth_hz must be positive")

    def peak_rate(self, sinr_lin):
        """Rate (bit/s) of a user alone in the cell: gamma * W * log2(1 + SINR)."""
        return self.gamma * self.bandwidth_hz * np.log1p(np.asarray(sinr_lin, dtype=float)) / math.log(2.0)

    def sinr_for_peak_rate(self, peak_rate):
        return np.expm1(np.asarray(peak_rate, dtype=float) * math.log(2.0) / (self.gamma * self.bandwidth_hz))


@dataclass(frozen=True)
class ServiceClass:
    """One class of calls; ``peak_rate`` is filled in by :class:`TrafficMix`."""

    index: int
    sinr_db: float
    requested_rate: float
    arrival_rate: float
    mean_duration: float
    peak_rate: float

    @property
    def sinr_lin(self) -> float:
        return 10.0 ** (self.sinr_db / 10.0)

    @property
    def traffic(self) -> float:
        """Traffic demand in Erlang (arrival rate times mean duration)."""
        return self.arrival_rate * self.mean_duration

    @property
    def service_rate(self) -> float:
        return 1.0 / self.mean_duration

    @property
    def resource_demand(self) -> float:
        return self.requested_rate / self.peak_rate


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TrafficMix:
    """Classes ordered by strictly increasing resource demand.

    Build it with :meth:`from_specs` (radio description) or
    :meth:`from_demands` (resource demands given directly); both sort the
    classes and merge the ones whose demands coincide.
    """

    classes: tuple[ServiceClass, ...]
    radio: RadioLink = field(default_factory=RadioLink)
    phi: np.ndarray = field(init=False, repr=False, compare=False)
    rho: np.ndarray = field(init=False, repr=False, compare=False)
    lam: np.ndarray = field(init=False, repr=False, compare=False)
    mu: np.ndarray = field(init=False, repr=False, compare=False)
    rate: np.ndarray = field(init=False, repr=False, compare=False)
    peak: np.ndarray = field(init=False, repr=False, compare=False)
    sinr_db: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cls = tuple(self.classes)
        object.__setattr__(self, "classes", cls)
        for c in cls:
            if c.arrival_rate < 0 or not math.isfinite(c.arrival_rate):
                raise ValueError(f"class {c.index}: arrival rate must be finite and >= 0")
            if not c.mean_duration > 0 or not math.isfinite(c.mean_duration):
                raise ValueError(f"class {c.index}: mean duration must be finite and > 0")
            if not c.requested_rate > 0 or not c.peak_rate > 0:
                raise ValueError(f"class {c.index}: requested and peak rates must be positive")
        phi = [c.resource_demand for c in cls]
        if any(b <= a for a, b in zip(phi, phi[1:])):
            raise ValueError("resource demands must be strictly increasing")
        object.__setattr__(self, "phi", _readonly(phi))
        object.__setattr__(self, "rho", _readonly([c.traffic for c in cls]))
        object.__setattr__(self, "lam", _readonly([c.arrival_rate for c in cls]))
        object.__setattr__(self, "mu", _readonly([c.service_rate for c in cls]))
        object.__setattr__(self, "rate", _readonly([c.requested_rate for c in cls]))
        object.__setattr__(self, "peak", _readonly([c.peak_rate for c in cls]))
        object.__setattr__(self, "sinr_db", _readonly([c.sinr_db for c in cls]))

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def J(self) -> int:
        return len(self.classes)

    @classmethod
    def from_specs(cls, specs: Iterable[dict], radio: RadioLink | None = None) -> "TrafficMix":
        """Build from dicts with keys ``sinr_db``, ``requested_rate_bps``,
        ``arrival_rate`` and ``mean_duration``. Derived quantities are
        always recomputed from the radio link."""
        radio = radio or RadioLink()
        rows = []
        for s in specs:
            sinr_db = float(s["sinr_db"])
            peak = float(radio.peak_rate(10.0 ** (sinr_db / 10.0)))
            rows.append(
                (sinr_db, float(s["requested_rate_bps"]), float(s["arrival_rate"]), float(s["mean_duration"]), peak)
            )
        return cls._assemble(rows, radio)

    @classmethod
    def from_demands(
        cls,
        phi: Sequence[float],
        rho: Sequence[float],
        mu: Sequence[float] | float = 1.0,
        requested_rate: Sequence[float] | float = 1.0,
        radio: RadioLink | None = None,
    ) -> "TrafficMix":
        """Synthetic mix from resource demands and traffic demands (Erlang).

        The SINR of each class is back-computed from its peak rate so that
        the radio description stays consistent.
        """
        radio = radio or RadioLink()
        phi = np.asarray(phi, dtype=float)
        n = phi.size
        rho = np.broadcast_to(np.asarray(rho, dtype=float), (n,))
        mu = np.broadcast_to(np.asarray(mu, dtype=float), (n,))
        rate = np.broadcast_to(np.asarray(requested_rate, dtype=float), (n,))
        if np.any(phi <= 0):
            raise ValueError("resource demands must be positive")
        rows = []
        for f, r, m, q in zip(phi, rho, mu, rate):
            peak = q / f
            sinr = float(radio.sinr_for_peak_rate(peak))
            sinr_db = 10.0 * math.log10(sinr) if sinr > 0 else -math.inf
            rows.append((sinr_db, float(q), float(r * m), float(1.0 / m), float(peak)))
        return cls._assemble(rows, radio)

    @classmethod
    def _assemble(cls, rows, radio: RadioLink) -> "TrafficMix":
        # rows: (sinr_db, rate, lam, duration, peak)
        rows = sorted(rows, key=lambda r: (r[1] / r[4], -r[0]))
        merged: list[list[float]] = []
        for row in rows:
            phi = row[1] / row[4]
            if merged:
                prev = merged[-1]
                prev_phi = prev[1] / prev[4]
                if abs(phi - prev_phi) <= _TIE_RTOL * max(phi, prev_phi):
                    lam = prev[2] + row[2]
                    traffic = prev[2] * prev[3] + row[2] * row[3]
                    prev[2] = lam
                    prev[3] = traffic / lam if lam > 0 else prev[3]
                    continue
            merged.append(list(row))
        classes = tuple(
            ServiceClass(
                index=i + 1, sinr_db=r[0], requested_rate=r[1], arrival_rate=r[2], mean_duration=r[3], peak_rate=r[4]
            )
            for i, r in enumerate(merged)
        )
        return cls(classes=classes, radio=radio)

    def to_dict(self) -> dict:
        return {
            "gamma": self.radio.gamma,
            "bandwidth_hz": self.radio.bandwidth_hz,
            "classes": [
                {
                    "sinr_db": c.sinr_db,
                    "requested_rate_bps": c.requested_rate,
                    "arrival_rate": c.arrival_rate,
                    "mean_duration": c.mean_duration,
                }
                for c in self.classes
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrafficMix":
        try:
            radio = RadioLink(gamma=float(doc["gamma"]), bandwidth_hz=float(doc["bandwidth_hz"]))
            return cls.from_specs(doc["classes"], radio)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed traffic mix document: {exc!r}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "TrafficMix":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_traffic(self, rho) -> "TrafficMix":
        """Same classes with traffic demands rescaled to ``rho`` (durations kept)."""
        rho = np.asarray(rho, dtype=float)
        if rho.shape != (self.J,):
            raise ValueError("rho has the wrong length")
        classes = tuple(
            ServiceClass(c.index, c.sinr_db, c.requested_rate, r / c.mean_duration, c.mean_duration, c.peak_rate)
            for c, r in zip(self.classes, rho)
        )
        return TrafficMix(classes=classes, radio=self.radio)


def as_configuration(x, mix: TrafficMix) -> np.ndarray:
    """Validate a user configuration (vector of per-class counts)."""
    x = np.asarray(x)
    if x.shape != (mix.J,):
        raise ValueError(f"configuration has shape {x.shape}, expected ({mix.J},)")
    if np.any(x < 0):
        raise ValueError("user counts must be non-negative")
    if not np.all(np.mod(x, 1) == 0):
        raise ValueError("user counts must be integers")
    return x.astype(np.int64)


def total_resource_demand(x, mix: TrafficMix) -> float:
    """Fraction of server capacity needed to serve every user in ``x``."""
    x = as_configuration(x, mix)
    return float(np.dot(mix.phi, x))


def sample_stationary(mix: TrafficMix, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw configurations from the stationary law: independent Poisson(rho_k)."""
    shape = (mix.J,) if size is None else (size, mix.J)
    return rng.poisson(np.broadcast_to(mix.rho, shape)).astype(np.int64)
