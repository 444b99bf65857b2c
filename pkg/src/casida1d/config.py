"""INI-style run configuration with strict key checking."""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigError
from .model import GridSpec, ModelSystem, SoftCoulombParams, XcPolynomial


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


@dataclass
class ModelSection:
    n: int = 300
    L: float = 20.0
    a: float = 1.0
    a_ext: float = 1.0
    Z: float = 2.0
    N: int = 2
    c2: float = -1.0
    c3: float = 0.0
    c4: float = 0.0


@dataclass
class ScfSection:
    tol: float = 1e-9
    max_iter: int = 5000
    mixing: float = 0.3
    occupation: Tuple[int, ...] = ()


@dataclass
class DriveSection:
    vp: Tuple[float, ...] = (0.0, 1.0)  # polynomial coefficients in x
    vp_file: str = ""
    shape: str = "gaussian"
    t0: float = 3.0
    sigma: float = 0.5
    omega0: float = 1.0
    eps: float = 1e-3
    T: float = 50.0
    dt: float = 0.01
    dt_out: float = 0.1


@dataclass
class FreqSection:
    omega_min: float = 0.0
    omega_max: float = 3.0
    n_omega: int = 601
    eta: float = 5e-3


@dataclass
class ResonanceSection:
    i0: int = 0
    a0: int = 2
    delta: Tuple[float, ...] = (0.02, 0.05, 0.1)
    s: float = 0.0  # 0 selects four times the level spacing
    eta_seq: Tuple[float, ...] = ()  # empty selects multiples of the level spacing
    lorentz_delta: float = 0.0  # 0 skips the Lorentzian fit


@dataclass
class Config:
    model: ModelSection = field(default_factory=ModelSection)
    scf: ScfSection = field(default_factory=ScfSection)
    drive: DriveSection = field(default_factory=DriveSection)
    freq: FreqSection = field(default_factory=FreqSection)
    resonance: ResonanceSection = field(default_factory=ResonanceSection)
    base_dir: str = field(default=".", repr=False, compare=False)

    def build_model(self, interacting: bool = True) -> ModelSystem:
        m = self.model
        return ModelSystem(GridSpec(m.n, m.L), SoftCoulombParams(m.a, m.Z, m.a_ext),
                           XcPolynomial(m.c2, m.c3, m.c4), m.N, interacting)

    def potential(self, x) -> np.ndarray:
        d = self.drive
        if d.vp_file:
            path = Path(d.vp_file)
            if not path.is_absolute():
                path = Path(self.base_dir) / path
            try:
                v = np.loadtxt(path, dtype=float, ndmin=1)
            except OSError as exc:
                raise ConfigError(f"drive.vp_file: cannot read {path}") from exc
            if v.shape != np.shape(x):
                raise ConfigError(f"drive.vp_file: expected {np.size(x)} values, got {v.size}")
            return v
        return np.polynomial.polynomial.polyval(x, d.vp)

    def as_dict(self) -> dict:
        out = {k: asdict(getattr(self, k)) for k in ("model", "scf", "drive", "freq", "resonance")}
        return json.loads(json.dumps(out))

    def digest(self, **extra) -> str:
        """SHA-256 over the resolved settings plus any command-line overrides."""
        payload = {"config": self.as_dict(), "extra": extra}
        if self.drive.vp_file:
            x = GridSpec(self.model.n, self.model.L).x
            payload["vp"] = self.potential(x).tolist()
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


_SECTIONS = {
    "model": ModelSection,
    "scf": ScfSection,
    "drive": DriveSection,
    "freq": FreqSection,
    "resonance": ResonanceSection,
}


def _convert(section: str, key: str, default, raw: str):
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            val = float(raw)
            if not math.isfinite(val):
                raise ValueError("not finite")
            return val
        if isinstance(default, tuple):
            vals = _floats(raw)
            if default and isinstance(default[0], int) or key == "occupation":
                return tuple(int(v) for v in vals)
            return vals
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from exc


def _require(cond: bool, key: str, msg: str):
    if not cond:
        raise ConfigError(f"{key}: {msg}")


def validate(cfg: Config):
    m, s, d, f, r = cfg.model, cfg.scf, cfg.drive, cfg.freq, cfg.resonance
    _require(m.n >= 16, "model.n", "must be >= 16")
    _require(m.L > 0, "model.L", "must be positive")
    _require(m.a > 0, "model.a", "must be positive")
    _require(m.a_ext > 0, "model.a_ext", "must be positive")
    _require(m.Z >= 0, "model.Z", "must be nonnegative")
    _require(1 <= m.N < m.n, "model.N", "must satisfy 1 <= N < n")
    _require(s.tol > 0, "scf.tol", "must be positive")
    _require(s.max_iter >= 1, "scf.max_iter", "must be >= 1")
    _require(0 < s.mixing <= 1, "scf.mixing", "must lie in (0, 1]")
    _require(not s.occupation or len(s.occupation) == m.N, "scf.occupation", "must list N indices")
    _require(d.shape in ("gaussian", "step", "sinusoid"), "drive.shape", "must be gaussian, step or sinusoid")
    _require(d.sigma > 0, "drive.sigma", "must be positive")
    _require(d.eps >= 0, "drive.eps", "must be nonnegative")
    _require(d.T >= 0, "drive.T", "must be nonnegative")
    _require(d.dt > 0, "drive.dt", "must be positive")
    _require(d.dt_out >= d.dt, "drive.dt_out", "must be >= drive.dt")
    _require(len(d.vp) >= 1 or bool(d.vp_file), "drive.vp", "needs at least one coefficient")
    _require(f.omega_max > f.omega_min, "freq.omega_max", "must exceed omega_min")
    _require(f.n_omega >= 2, "freq.n_omega", "must be >= 2")
    _require(f.eta > 0, "freq.eta", "must be positive")
    _require(0 <= r.i0 < m.N, "resonance.i0", "must be an occupied index")
    _require(m.N <= r.a0 < m.n, "resonance.a0", "must be an unoccupied index")
    _require(len(r.delta) >= 1 and all(v > 0 for v in r.delta), "resonance.delta", "must be positive values")
    _require(r.s >= 0, "resonance.s", "must be nonnegative")
    _require(all(v > 0 for v in r.eta_seq) and all(np.diff(r.eta_seq) < 0),
             "resonance.eta_seq", "must be positive and decreasing")
    _require(r.lorentz_delta >= 0, "resonance.lorentz_delta", "must be nonnegative")


def load(path: Optional[str] = None, text: Optional[str] = None) -> Config:
    """Read a config file (or string); missing keys take defaults, unknown ones raise."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case sensitive (L, Z, N)
    cfg = Config()
    try:
        if text is not None:
            parser.read_string(text)
        elif path is not None:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
            cfg.base_dir = str(Path(path).resolve().parent)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    for name in parser.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        sec = getattr(cfg, name)
        for key, raw in parser.items(name):
            if not hasattr(sec, key):
                raise ConfigError(f"unknown key {name}.{key}")
            setattr(sec, key, _convert(name, key, getattr(sec, key), raw))
    validate(cfg)
    return cfg
