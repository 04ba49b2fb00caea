"""Run configuration: a JSON document validated into a frozen :class:`RunConfig`.

Every key is checked; unknown keys are errors. ``serialize`` writes the fully
defaulted document, so ``parse_config(serialize(cfg)) == cfg``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any

from .geometry import Disk, Domain, Interval, Rectangle
from .kernels import ProcessParams

SUBCOMMANDS = ("simulate", "solve", "compare", "validate", "constants", "phantom")
INITIAL_LAWS = ("point", "uniform", "tabulated", "cosine")

# keys each subcommand needs in the document; everything else is optional
REQUIRED = {
    "simulate": ("domain", "params", "N", "T", "initial", "grid"),
    "solve": ("domain", "params", "T", "initial", "grid"),
    "phantom": ("domain", "params", "T", "initial", "grid"),
    "compare": (),
    "validate": (),
    "constants": (),
}
TOP_KEYS = {
    "subcommand", "domain", "params", "N", "T", "snapshots", "initial", "grid", "seed", "out", "workers",
    "alpha_override", "beta_override", "inputs", "samples",
}
# validation defaults sit in the regime where the two-grid boundary check is first order
VALIDATE_PARAMS = {"s": 0.25, "p": 0.2, "h": 0.01}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DomainSpec:
    shape: str
    values: tuple  # interval: (a, b); rectangle: (lo0, lo1, hi0, hi1); disk: (c0, c1, r)

    def build(self) -> Domain:
        if self.shape == "interval":
            return Interval(*self.values)
        if self.shape == "rectangle":
            return Rectangle(self.values[:2], self.values[2:])
        return Disk(self.values[:2], self.values[2])

    def to_doc(self) -> dict:
        v = self.values
        if self.shape == "interval":
            return {"shape": "interval", "a": v[0], "b": v[1]}
        if self.shape == "rectangle":
            return {"shape": "rectangle", "lo": list(v[:2]), "hi": list(v[2:])}
        return {"shape": "disk", "center": list(v[:2]), "radius": v[2]}


@dataclass(frozen=True)
class InitialSpec:
    law: str
    x0: tuple | None = None
    path: str | None = None
    mode: int = 1
    offset: float = 1.0

    def to_doc(self) -> dict:
        d: dict[str, Any] = {"law": self.law}
        if self.law == "point":
            d["x0"] = list(self.x0)
        elif self.law == "tabulated":
            d["path"] = self.path
        elif self.law == "cosine":
            d["mode"] = self.mode
            d["offset"] = self.offset
        return d


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    domain: DomainSpec | None = None
    s: float | None = None
    p: float | None = None
    h: float | None = None
    N: int | None = None
    T: float | None = None
    snapshots: tuple | None = None
    initial: InitialSpec | None = None
    dx: float | None = None
    band: float = 5.0
    seed: int = 0
    out: str = "out"
    workers: int | None = None
    alpha_override: float | None = None
    beta_override: float | None = None
    inputs: tuple | None = None  # (histogram csv, field csv) for compare
    samples: int = 10_000_000

    @property
    def params(self) -> ProcessParams:
        return ProcessParams(self.s, self.p, self.h)

    @property
    def snapshot_times(self) -> list[float]:
        return list(self.snapshots) if self.snapshots is not None else [self.T]

    def with_overrides(self, **kw) -> "RunConfig":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update({k: v for k, v in kw.items() if v is not None})
        return RunConfig(**d)


def _num(doc, key, where, *, integer=False, positive=False, nonneg=False):
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}{key}: expected a number, got {v!r}")
    if integer:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(f"{where}{key}: expected an integer, got {v!r}")
        v = int(v)
    else:
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError(f"{where}{key}: must be finite")
    if positive and not v > 0:
        raise ConfigError(f"{where}{key}: must be positive, got {v!r}")
    if nonneg and v < 0:
        raise ConfigError(f"{where}{key}: must be non-negative, got {v!r}")
    return v


def _vec(doc, key, where, n):
    v = doc[key]
    if not isinstance(v, list) or len(v) != n:
        raise ConfigError(f"{where}{key}: expected a list of {n} numbers")
    return tuple(_num({"v": x}, "v", f"{where}{key}.") for x in v)


def _check_keys(doc, allowed, where, required=()):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where or 'document'}: expected an object")
    for k in doc:
        if k not in allowed:
            raise ConfigError(f"unknown key {where}{k!r}")
    for k in required:
        if k not in doc:
            raise ConfigError(f"missing required key {where}{k!r}")


def _parse_domain(doc) -> DomainSpec:
    _check_keys(doc, {"shape", "a", "b", "lo", "hi", "center", "radius"}, "domain.", ("shape",))
    shape = doc["shape"]
    keys = {"interval": ("a", "b"), "rectangle": ("lo", "hi"), "disk": ("center", "radius")}
    if shape not in keys:
        raise ConfigError(f"domain.shape: unknown shape {shape!r}")
    _check_keys(doc, {"shape", *keys[shape]}, "domain.", keys[shape])
    if shape == "interval":
        a, b = _num(doc, "a", "domain."), _num(doc, "b", "domain.")
        if not a < b:
            raise ConfigError("domain: interval needs a < b")
        return DomainSpec("interval", (a, b))
    if shape == "rectangle":
        lo, hi = _vec(doc, "lo", "domain.", 2), _vec(doc, "hi", "domain.", 2)
        if not all(l < u for l, u in zip(lo, hi)):
            raise ConfigError("domain: rectangle needs lo < hi componentwise")
        return DomainSpec("rectangle", lo + hi)
    c = _vec(doc, "center", "domain.", 2)
    return DomainSpec("disk", c + (_num(doc, "radius", "domain.", positive=True),))


def _parse_initial(doc, n: int) -> InitialSpec:
    _check_keys(doc, {"law", "x0", "path", "mode", "offset"}, "initial.", ("law",))
    law = doc["law"]
    if law not in INITIAL_LAWS:
        raise ConfigError(f"initial.law: unknown law {law!r}")
    allowed = {"point": {"law", "x0"}, "uniform": {"law"}, "tabulated": {"law", "path"}, "cosine": {"law", "mode", "offset"}}
    _check_keys(doc, allowed[law], "initial.")
    if law == "point":
        if "x0" not in doc:
            raise ConfigError("missing required key 'initial.x0'")
        x0 = doc["x0"]
        x0 = _vec({"x0": x0 if isinstance(x0, list) else [x0]}, "x0", "initial.", n)
        return InitialSpec("point", x0=x0)
    if law == "tabulated":
        if not isinstance(doc.get("path"), str):
            raise ConfigError("initial.path: expected a file path")
        return InitialSpec("tabulated", path=doc["path"])
    if law == "cosine":
        mode = _num(doc, "mode", "initial.", integer=True, nonneg=True) if "mode" in doc else 1
        offset = _num(doc, "offset", "initial.") if "offset" in doc else 1.0
        return InitialSpec("cosine", mode=mode, offset=offset)
    return InitialSpec("uniform")


def parse_config(text: str | dict) -> RunConfig:
    """Validate a JSON document (text or already-decoded tree) into a RunConfig."""
    if isinstance(text, str):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed JSON: {e}") from None
    else:
        doc = text
    _check_keys(doc, TOP_KEYS, "", ("subcommand",))
    sub = doc["subcommand"]
    if sub not in SUBCOMMANDS:
        raise ConfigError(f"subcommand: unknown {sub!r}")
    for k in ("alpha_override", "beta_override"):
        if k in doc and sub != "solve":
            raise ConfigError(f"unknown key {k!r} (allowed for the solve subcommand only)")
    if sub == "compare" and "inputs" not in doc:
        required = ("domain", "params", "N", "T", "initial", "grid")
    else:
        required = REQUIRED[sub]
    _check_keys(doc, TOP_KEYS, "", required)
    kw: dict[str, Any] = {"subcommand": sub}

    if "domain" in doc:
        kw["domain"] = _parse_domain(doc["domain"])
    elif sub in ("validate", "constants"):
        kw["domain"] = DomainSpec("interval", (0.0, 1.0))
    n = 2 if kw.get("domain") and kw["domain"].shape != "interval" else 1

    pdoc = doc.get("params", VALIDATE_PARAMS if sub in ("validate", "constants") else None)
    if pdoc is not None:
        _check_keys(pdoc, {"s", "p", "h"}, "params.", ("s", "p", "h"))
        s, p, h = (_num(pdoc, k, "params.") for k in ("s", "p", "h"))
        try:
            ProcessParams(s, p, h)
        except ValueError as e:
            raise ConfigError(f"params: {e}") from None
        kw.update(s=s, p=p, h=h)

    if "N" in doc:
        kw["N"] = _num(doc, "N", "", integer=True, positive=True)
    if "T" in doc:
        kw["T"] = _num(doc, "T", "", nonneg=True)
    if "snapshots" in doc:
        snaps = doc["snapshots"]
        if not isinstance(snaps, list) or not snaps:
            raise ConfigError("snapshots: expected a non-empty list of times")
        snaps = tuple(_num({"t": t}, "t", "snapshots.", nonneg=True) for t in snaps)
        if "T" in kw and max(snaps) > kw["T"] * (1 + 1e-12):
            raise ConfigError("snapshots: times must not exceed T")
        kw["snapshots"] = snaps
    if "initial" in doc:
        init = _parse_initial(doc["initial"], n)
        if init.law == "cosine" and sub != "solve":
            raise ConfigError("initial.law 'cosine' is available for the solve subcommand only")
        if init.law == "point" and not kw["domain"].build().contains(init.x0 if n > 1 else init.x0[0]):
            raise ConfigError("initial.x0 must lie inside the domain")
        kw["initial"] = init
    if "grid" in doc:
        g = doc["grid"]
        _check_keys(g, {"dx", "band"}, "grid.", ("dx",))
        kw["dx"] = _num(g, "dx", "grid.", positive=True)
        if "band" in g:
            kw["band"] = _num(g, "band", "grid.", nonneg=True)
    elif sub == "validate":
        kw["dx"] = 1 / 128
    if "seed" in doc:
        kw["seed"] = _num(doc, "seed", "", integer=True, nonneg=True)
        if kw["seed"] >= 2**64:
            raise ConfigError("seed: must fit in 64 bits")
    if "out" in doc:
        if not isinstance(doc["out"], str) or not doc["out"]:
            raise ConfigError("out: expected a directory path")
        kw["out"] = doc["out"]
    if "workers" in doc and doc["workers"] is not None:
        kw["workers"] = _num(doc, "workers", "", integer=True, positive=True)
    for k in ("alpha_override", "beta_override"):
        if k in doc and doc[k] is not None:
            kw[k] = _num(doc, k, "", nonneg=True)
    if "inputs" in doc:
        i = doc["inputs"]
        _check_keys(i, {"histogram", "field"}, "inputs.", ("histogram", "field"))
        if not all(isinstance(i[k], str) for k in ("histogram", "field")):
            raise ConfigError("inputs: expected file paths")
        kw["inputs"] = (i["histogram"], i["field"])
    if "samples" in doc:
        kw["samples"] = _num(doc, "samples", "", integer=True, positive=True)
    return RunConfig(**kw)


def serialize(cfg: RunConfig) -> str:
    """Fully defaulted JSON document for ``cfg`` (stable key order)."""
    d: dict[str, Any] = {"subcommand": cfg.subcommand}
    if cfg.domain is not None:
        d["domain"] = cfg.domain.to_doc()
    if cfg.s is not None:
        d["params"] = {"s": cfg.s, "p": cfg.p, "h": cfg.h}
    for k in ("N", "T"):
        if getattr(cfg, k) is not None:
            d[k] = getattr(cfg, k)
    if cfg.snapshots is not None:
        d["snapshots"] = list(cfg.snapshots)
    if cfg.initial is not None:
        d["initial"] = cfg.initial.to_doc()
    if cfg.dx is not None:
        d["grid"] = {"dx": cfg.dx, "band": cfg.band}
    d["seed"] = cfg.seed
    d["out"] = cfg.out
    if cfg.workers is not None:
        d["workers"] = cfg.workers
    for k in ("alpha_override", "beta_override"):
        if getattr(cfg, k) is not None:
            d[k] = getattr(cfg, k)
    if cfg.inputs is not None:
        d["inputs"] = {"histogram": cfg.inputs[0], "field": cfg.inputs[1]}
    d["samples"] = cfg.samples
    return json.dumps(d, indent=2)
