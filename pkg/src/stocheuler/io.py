"""Configuration parsing and the on-disk formats.

Config files are INI files with one section per component: ``[grid]``,
``[solver]``, ``[noise]``, ``[initial]``, ``[lagrangian]`` and ``[verify]``.
Unknown sections or keys are rejected.

Binary snapshot layout (all little-endian)::

    b"SEUL" | u32 version | u32 n_modes | n_modes^2 x (f64 re, f64 im)

Coefficients are stored with wavenumbers ascending from ``-n/2`` to
``n/2 - 1``, rows carrying ``k1`` and columns ``k2``.

Particle files use magic ``b"SEUP"``; see :func:`write_particles`.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import math
import os
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, SnapshotFormatError
from .lagrangian import ParticleSet
from .solver import DiagnosticsRecord, InitialCondition, NoiseParams, SimConfig
from .spectral import Grid, SpectralField

__all__ = [
    "LagrangianParams",
    "VerifyParams",
    "RunConfig",
    "RunManifest",
    "load_config",
    "parse_config",
    "config_to_dict",
    "config_hash",
    "write_snapshot",
    "read_snapshot",
    "write_particles",
    "read_particles",
    "write_diagnostics",
    "read_diagnostics",
    "write_json",
]

SNAPSHOT_MAGIC = b"SEUL"
PARTICLE_MAGIC = b"SEUP"
FORMAT_VERSION = 1
DIAGNOSTIC_COLUMNS = DiagnosticsRecord.FIELDS


@dataclass(frozen=True)
class LagrangianParams:
    """Particle lattice and the refinement ladder of the transport audit."""

    n_side: int = 12
    h: float = 1e-3
    levels: int = 3
    n_modes: int | None = None  # level-0 grid; defaults to the solver grid
    dt: float | None = None  # level-0 step; defaults to the solver dt


@dataclass(frozen=True)
class VerifyParams:
    """Sizes and overrides for the audit battery."""

    biot_savart_samples: int = 1000
    identity_samples: int = 200
    commutator_samples: int = 100
    viscous_nu: float = 0.05
    ensemble_members: int = 16
    raised_R: float = math.inf
    delta: float = 1e-2
    burn_in: float = 0.0
    vv_n_max: int = 8
    vv_t_end: float | None = None
    vv_dt: float | None = None


@dataclass(frozen=True)
class RunConfig:
    sim: SimConfig
    lagrangian: LagrangianParams = field(default_factory=LagrangianParams)
    verify: VerifyParams = field(default_factory=VerifyParams)
    source: str = ""


# -- config parsing ------------------------------------------------------------

_SOLVER_KEYS = {
    "dt": float,
    "t_end": float,
    "sobolev_k": int,
    "truncation_R": float,
    "viscosity": float,
    "seed": int,
    "dealias": bool,
    "snapshot_stride": int,
    "scheme": str,
    "cfl_safety": float,
    "bit_exact": bool,
    "mode_growth": int,
}
_NOISE_KEYS = {"mode_cutoff": float, "decay_exponent": float, "base_amplitude": float, "sobolev_index": int}
_INITIAL_KEYS = {
    "kind": str,
    "modes": "modes",
    "seed": int,
    "kmax": int,
    "slope": float,
    "l2_norm": float,
    "path": str,
}
_LAGRANGIAN_KEYS = {"n_side": int, "h": float, "levels": int, "n_modes": int, "dt": float}
_VERIFY_KEYS = {f.name: (int if f.type in ("int",) else float) for f in fields(VerifyParams)}
_SECTIONS = {
    "grid": {"n_modes": int},
    "solver": _SOLVER_KEYS,
    "noise": _NOISE_KEYS,
    "initial": _INITIAL_KEYS,
    "lagrangian": _LAGRANGIAN_KEYS,
    "verify": _VERIFY_KEYS,
}
_REQUIRED = {("grid", "n_modes"), ("solver", "dt"), ("solver", "t_end")}


def _convert(section: str, key: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind == "modes":
            return _parse_modes(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: cannot parse as {getattr(kind, '__name__', kind)}") from exc


def _parse_modes(raw: str) -> tuple:
    """``"k1 k2 cos sin; k1 k2 cos sin"`` -> tuple of 4-tuples."""
    out = []
    for chunk in raw.replace("\n", ";").split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.replace(",", " ").split()
        if len(parts) != 4:
            raise ValueError(f"mode entry {chunk!r} needs 4 numbers")
        k1, k2 = int(parts[0]), int(parts[1])
        out.append((k1, k2, float(parts[2]), float(parts[3])))
    return tuple(out)


def _read_ini(path) -> tuple[dict, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"), strict=True)
    cp.optionxform = str  # keys are case-sensitive (truncation_R)
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    values: dict = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}] (allowed: {', '.join(_SECTIONS)})")
        schema = _SECTIONS[section]
        for key, raw in cp.items(section):
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in [{section}] (allowed: {', '.join(schema)})")
            values[(section, key)] = _convert(section, key, raw, schema[key])
    for req in _REQUIRED:
        if req not in values:
            raise ConfigError(f"missing required key [{req[0]}] {req[1]}")
    return values, text


def _pick(values, section):
    return {k: v for (s, k), v in values.items() if s == section}


def load_config(path) -> RunConfig:
    """Parse and fully validate a config file."""
    values, text = _read_ini(path)
    try:
        grid = Grid(values[("grid", "n_modes")])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[grid] n_modes: {exc}") from exc
    init = _pick(values, "initial")
    if init.get("path"):
        p = Path(init["path"])
        if not p.is_absolute():
            init["path"] = str((Path(path).parent / p).resolve())
    try:
        sim = SimConfig(
            grid=grid,
            noise=NoiseParams(**_pick(values, "noise")),
            initial=InitialCondition(**init),
            **_pick(values, "solver"),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if sim.initial.kind not in ("zero", "modes", "random", "snapshot"):
        raise ConfigError(f"[initial] kind={sim.initial.kind!r} must be zero, modes, random or snapshot")
    if sim.initial.kind == "snapshot" and not sim.initial.path:
        raise ConfigError("[initial] kind=snapshot requires a path")
    if sim.initial.kind == "random" and sim.initial.kmax > grid.max_wavenumber:
        raise ConfigError(f"[initial] kmax={sim.initial.kmax} exceeds grid max wavenumber {grid.max_wavenumber}")
    for k1, k2, _, _ in sim.initial.modes:
        if max(abs(k1), abs(k2)) > grid.max_wavenumber:
            raise ConfigError(f"[initial] mode ({k1}, {k2}) outside the retained set of the grid")
    lag = LagrangianParams(**_pick(values, "lagrangian"))
    if lag.n_side < 1 or lag.levels < 1 or not lag.h > 0:
        raise ConfigError("[lagrangian] n_side and levels must be >= 1 and h > 0")
    if lag.n_modes is not None:
        try:
            Grid(lag.n_modes)
        except ValueError as exc:
            raise ConfigError(f"[lagrangian] n_modes: {exc}") from exc
    ver = VerifyParams(**_pick(values, "verify"))
    if ver.vv_n_max < 2:
        raise ConfigError("[verify] vv_n_max must be >= 2")
    if ver.delta < 0:
        raise ConfigError("[verify] delta must be nonnegative")
    return RunConfig(sim, lag, ver, text)


def parse_config(path) -> SimConfig:
    """Validated :class:`SimConfig` from a config file."""
    return load_config(path).sim


def config_to_dict(run: RunConfig) -> dict:
    def clean(obj):
        if isinstance(obj, dict):
            return {k: clean(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [clean(v) for v in obj]
        if isinstance(obj, float) and not math.isfinite(obj):
            return repr(obj)
        return obj

    return clean({"sim": asdict(run.sim), "lagrangian": asdict(run.lagrangian), "verify": asdict(run.verify)})


def config_hash(run: RunConfig) -> str:
    """SHA-256 of the canonical JSON form of the parsed config."""
    blob = json.dumps(config_to_dict(run), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# -- snapshots -----------------------------------------------------------------


def write_snapshot(w: SpectralField, path) -> Path:
    path = Path(path)
    n = w.grid.n_modes
    ordered = np.fft.fftshift(w.coeffs)
    pairs = np.empty((n, n, 2), dtype="<f8")
    pairs[..., 0] = ordered.real
    pairs[..., 1] = ordered.imag
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, n))
        fh.write(pairs.tobytes())
    return path


def read_snapshot(path, expected_n_modes: int | None = None) -> SpectralField:
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise SnapshotFormatError(f"{path}: truncated header")
    if data[:4] != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {data[:4]!r}, expected {SNAPSHOT_MAGIC!r}")
    version, n = struct.unpack("<II", data[4:12])
    if version != FORMAT_VERSION:
        raise SnapshotFormatError(f"{path}: unsupported format version {version}")
    if expected_n_modes is not None and n != expected_n_modes:
        raise SnapshotFormatError(f"{path}: n_modes={n} does not match the expected grid {expected_n_modes}")
    need = 12 + 16 * n * n
    if len(data) != need:
        raise SnapshotFormatError(f"{path}: expected {need} bytes for n_modes={n}, found {len(data)}")
    try:
        grid = Grid(n)
    except ValueError as exc:
        raise SnapshotFormatError(f"{path}: {exc}") from exc
    pairs = np.frombuffer(data, dtype="<f8", offset=12).reshape(n, n, 2)
    coeffs = np.fft.ifftshift(pairs[..., 0] + 1j * pairs[..., 1])
    return SpectralField(grid, coeffs)


# -- particles -----------------------------------------------------------------


def write_particles(ps: ParticleSet, path) -> Path:
    """Layout: magic, u32 version, u32 count, u32 n_base, f64 h, then
    initial/unwrapped positions (count x 2 f64 each), base indices
    (n_base u32) and neighbor quadruples (n_base x 4 u32)."""
    path = Path(path)
    P = len(ps)
    nb = 0 if ps.neighbors is None else len(ps.neighbors)
    h = math.nan if ps.h is None else ps.h
    with open(path, "wb") as fh:
        fh.write(PARTICLE_MAGIC)
        fh.write(struct.pack("<IIId", FORMAT_VERSION, P, nb, h))
        fh.write(np.ascontiguousarray(ps.initial_positions, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ps.unwrapped, dtype="<f8").tobytes())
        if nb:
            fh.write(np.ascontiguousarray(ps.base, dtype="<u4").tobytes())
            fh.write(np.ascontiguousarray(ps.neighbors, dtype="<u4").tobytes())
    return path


def read_particles(path) -> ParticleSet:
    data = Path(path).read_bytes()
    head = 4 + struct.calcsize("<IIId")
    if len(data) < head or data[:4] != PARTICLE_MAGIC:
        raise SnapshotFormatError(f"{path}: not a particle file")
    version, P, nb, h = struct.unpack("<IIId", data[4:head])
    if version != FORMAT_VERSION:
        raise SnapshotFormatError(f"{path}: unsupported format version {version}")
    need = head + 32 * P + 20 * nb
    if len(data) != need:
        raise SnapshotFormatError(f"{path}: expected {need} bytes, found {len(data)}")
    off = head
    init = np.frombuffer(data, "<f8", 2 * P, off).reshape(P, 2).astype(float)
    off += 16 * P
    unw = np.frombuffer(data, "<f8", 2 * P, off).reshape(P, 2).astype(float)
    off += 16 * P
    init.setflags(write=False)
    unw.setflags(write=False)
    if not nb:
        return ParticleSet(init, unw)
    base = np.frombuffer(data, "<u4", nb, off).astype(np.int64)
    off += 4 * nb
    neighbors = np.frombuffer(data, "<u4", 4 * nb, off).reshape(nb, 4).astype(np.int64)
    return ParticleSet(init, unw, base, neighbors, float(h))


# -- diagnostics and reports ---------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return "%.17g" % v


def write_diagnostics(series, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(DIAGNOSTIC_COLUMNS) + "\n")
        for rec in series:
            fh.write(",".join(_fmt(v) for v in rec.as_tuple()) + "\n")
    return path


def read_diagnostics(path) -> list[DiagnosticsRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != DIAGNOSTIC_COLUMNS:
            raise SnapshotFormatError(f"{path}: unexpected diagnostics header {header}")
        out = []
        for row in reader:
            if len(row) != len(DIAGNOSTIC_COLUMNS):
                raise SnapshotFormatError(f"{path}: row with {len(row)} columns")
            vals = [float(x) for x in row[:-1]]
            out.append(DiagnosticsRecord(*vals, tau_R_crossed=row[-1] == "1"))
        return out


def write_json(obj, path) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")
    return path


@dataclass
class RunManifest:
    """Provenance record written next to every run's outputs."""

    command: str
    config_hash: str
    config: dict
    version: str
    seed: int
    start_time: float
    end_time: float | None = None
    artifacts: list = field(default_factory=list)
    status: str = "running"

    def add(self, path) -> None:
        self.artifacts.append(os.path.basename(str(path)))

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "config": self.config,
            "version": self.version,
            "seed": self.seed,
            "start_time": self.start_time,
            "end_time": self.end_time,
            "artifacts": sorted(self.artifacts),
            "status": self.status,
        }

    def write(self, out_dir) -> Path:
        return write_json(self.to_dict(), Path(out_dir) / "manifest.json")
