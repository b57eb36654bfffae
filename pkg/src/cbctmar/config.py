"""Text configuration (INI style: ``[section]`` headers and ``key = value``).

Unknown sections and keys are rejected with the offending line number.
Custom phantoms list their primitives in sections named ``[body NAME]`` and
``[metal NAME]``.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, replace

from .attenuation import Spectrum, default_table
from .experiment import DatasetConfig
from .geometry import ScanGeometry
from .nn.train import TrainConfig
from .pipeline import PipelineConfig, Physics
from .scenes import out_of_fov_phantom, random_phantom, water_cylinder
from .volume import Box, CappedCylinder, EllipticCylinder, Grid, PhantomSpec, Sphere


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(n):
    def parse(s: str):
        vals = tuple(float(x) for x in re.split(r"[,\s]+", s.strip()) if x)
        if n is not None and len(vals) != n:
            raise ValueError(f"expected {n} numbers, got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("values must be finite")
        return vals
    return parse


def _ints(s: str):
    return tuple(int(x) for x in re.split(r"[,\s]+", s.strip()) if x)


def _words(s: str):
    return tuple(x for x in re.split(r"[,\s]+", s.strip()) if x)


SCHEMA = {
    "run": {"seed": (int, 2060), "threads": (int, 1)},
    "geometry": {"sdd_mm": (float, 580.0), "sid_mm": (float, 392.0), "det_nu": (int, 128), "det_nv": (int, 96),
                 "pitch_u_mm": (float, 1.9), "pitch_v_mm": (float, 1.9), "n_views": (int, 60),
                 "arc_deg": (float, 360.0), "kvp": (float, 90.0)},
    "grid": {"nx": (int, 64), "ny": (int, 64), "nz": (int, 64), "spacing_mm": (float, 2.0)},
    "phantom": {"kind": (str, "random"), "seed": (int, 0), "with_metal": (_bool, True),
                "radius_mm": (float, 40.0), "n_metal_min": (int, 1), "n_metal_max": (int, 3)},
    "physics": {"spectrum_bins": (int, 8), "monoenergetic_kev": (float, 0.0)},
    "simulation": {"photons_per_pixel": (float, 5000.0), "noiseless": (_bool, False)},
    "pipeline": {"threshold_hu": (float, 3400.0), "clip_hu": (float, 3400.0), "gt_eps": (float, 0.01),
                 "photons_noisy_min": (float, 300.0), "photons_noisy_max": (float, 1400.0),
                 "photons_clean": (float, 5000.0), "median_radius": (int, 1), "dilate_radius": (int, 1),
                 "inpaint_method": (str, "harmonic"), "cmar_seed_hu": (float, 7000.0),
                 "cmar_grow_hu": (float, 3000.0), "consistency_tau": (float, 0.9), "connectivity": (int, 26)},
    "train": {"batch_size": (int, 4), "beta1": (float, 0.9), "beta2": (float, 0.999), "lr_start": (float, 1e-4),
              "lr_end": (float, 1e-6), "lr_decay_epochs": (int, 25), "patience": (int, 5),
              "aug_prob": (float, 0.2), "strategy": (str, "full+crops"), "base_channels": (int, 8),
              "depth": (int, 4), "max_epochs": (int, 50), "dtype": (str, "float32")},
    "dataset": {"n_train": (int, 10), "n_val": (int, 2), "view_step": (int, 1), "val_view_step": (int, 6), "regime": (str, "noisy"),
                "train_seed": (int, 1000), "test_seed": (int, 5000), "n_test_metal": (int, 6),
                "n_test_free": (int, 3), "out_of_fov": (_bool, True), "oof_margin_mm": (float, 6.0)},
    "experiment": {"strategies": (_words, ("full", "crops", "full+crops")),
                   "seeds": (_ints, (2060, 12060, 22060))},
}

PRIMITIVE_KEYS = {
    "sphere": {"radius"},
    "elliptic_cylinder": {"rx", "ry", "half_height", "angle_deg"},
    "box": {"half_size", "angle_deg"},
    "capped_cylinder": {"radius", "half_length", "axis"},
}
_PRIM_PARSE = {"hu": float, "center": _floats(3), "radius": float, "rx": float, "ry": float,
               "half_height": float, "angle_deg": float, "half_size": _floats(3), "half_length": float,
               "axis": _floats(3)}
_PRIM_CLS = {"sphere": Sphere, "elliptic_cylinder": EllipticCylinder, "box": Box,
             "capped_cylinder": CappedCylinder}

PHANTOM_KINDS = ("random", "water", "out_of_fov", "custom")


def _line_of(text: str, section: str, key: str | None = None) -> int:
    """1-based line of a section header (or of a key inside it); 0 if not found."""
    in_sec, sec_line = False, 0
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            in_sec = s[1:-1].strip() == section
            if in_sec:
                sec_line = i
                if key is None:
                    return i
            continue
        if in_sec and key is not None and re.match(r"\s*" + re.escape(key) + r"\s*[=:]", raw, re.IGNORECASE):
            return i
    return sec_line


@dataclass
class Settings:
    values: dict
    primitives: dict = field(default_factory=dict)  # "body"/"metal" -> list of primitives
    source: str = "<defaults>"

    def get(self, section: str, key: str):
        return self.values[section][key]

    def section(self, name: str) -> dict:
        return dict(self.values[name])

    # ---- typed views
    def geometry(self) -> ScanGeometry:
        s = self.values["geometry"]
        return ScanGeometry.circular(s["n_views"], math.radians(s["arc_deg"]), sdd_mm=s["sdd_mm"],
                                     sid_mm=s["sid_mm"], det_nu=s["det_nu"], det_nv=s["det_nv"],
                                     pitch_u_mm=s["pitch_u_mm"], pitch_v_mm=s["pitch_v_mm"], kvp=s["kvp"])

    def grid(self) -> Grid:
        s = self.values["grid"]
        return Grid.centered((s["nx"], s["ny"], s["nz"]), s["spacing_mm"])

    def physics(self) -> Physics:
        s = self.values["physics"]
        if s["monoenergetic_kev"] > 0:
            return Physics(Spectrum.monoenergetic(s["monoenergetic_kev"]), default_table())
        return Physics.default(self.values["geometry"]["kvp"], s["spectrum_bins"])

    def pipeline(self) -> PipelineConfig:
        s = dict(self.values["pipeline"])
        s["photons_noisy"] = (s.pop("photons_noisy_min"), s.pop("photons_noisy_max"))
        s["spectrum_bins"] = self.values["physics"]["spectrum_bins"]
        return PipelineConfig(**s)

    def train(self, **override) -> TrainConfig:
        s = dict(self.values["train"])
        s["betas"] = (s.pop("beta1"), s.pop("beta2"))
        s["seed"] = self.values["run"]["seed"]
        s.update(override)
        return TrainConfig(**s)

    def dataset(self) -> DatasetConfig:
        return DatasetConfig(**self.values["dataset"])

    def phantom(self, grid: Grid | None = None) -> PhantomSpec:
        s = self.values["phantom"]
        kind = s["kind"]
        if kind == "random":
            return random_phantom(s["seed"], s["with_metal"], (s["n_metal_min"], s["n_metal_max"]))
        if kind == "water":
            return water_cylinder(s["radius_mm"])
        if kind == "out_of_fov":
            return out_of_fov_phantom(s["seed"], grid or self.grid(), self.values["dataset"]["oof_margin_mm"])
        metal = self.primitives.get("metal", []) if s["with_metal"] else []
        return PhantomSpec(self.primitives.get("body", []), metal)

    def with_values(self, section: str, **kw) -> "Settings":
        vals = {k: dict(v) for k, v in self.values.items()}
        for k, v in kw.items():
            if k not in vals[section]:
                raise ConfigError(f"unknown key {k!r} in [{section}]")
            vals[section][k] = v
        out = replace(self, values=vals)
        _validate(out)
        return out


def defaults() -> Settings:
    return Settings({sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()})


def _parse_primitive(cp, text, sec, path):
    keys = dict(cp[sec])
    where = f"{path}: line {_line_of(text, sec)}: [{sec}]"
    kind = keys.pop("type", None)
    if kind not in PRIMITIVE_KEYS:
        raise ConfigError(f"{where}: type must be one of {sorted(PRIMITIVE_KEYS)}, got {kind!r}")
    allowed = {"hu", "center"} | PRIMITIVE_KEYS[kind]
    kw = {}
    for k, raw in keys.items():
        if k not in allowed:
            raise ConfigError(f"{path}: line {_line_of(text, sec, k)}: unknown key {k!r} for {kind}")
        try:
            kw[k] = _PRIM_PARSE[k](raw)
        except ValueError as e:
            raise ConfigError(f"{path}: line {_line_of(text, sec, k)}: bad value for {k!r}: {e}") from None
    if "hu" not in kw or "center" not in kw:
        raise ConfigError(f"{where}: hu and center are required")
    try:
        return _PRIM_CLS[kind](**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def parse(text: str, path: str = "<string>") -> Settings:
    cp = configparser.ConfigParser(interpolation=None, strict=True, empty_lines_in_values=False)
    try:
        cp.read_string(text, source=path)
    except configparser.Error as e:
        raise ConfigError(str(e).replace("\n", " ")) from None
    st = defaults()
    st.source = path
    prims = {"body": [], "metal": []}
    for sec in cp.sections():
        head = sec.split(None, 1)
        if len(head) == 2 and head[0] in prims:
            prims[head[0]].append(_parse_primitive(cp, text, sec, path))
            continue
        if sec not in SCHEMA:
            raise ConfigError(f"{path}: line {_line_of(text, sec)}: unknown section [{sec}]")
        for key, raw in cp[sec].items():
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{path}: line {_line_of(text, sec, key)}: unknown key {key!r} in [{sec}]")
            conv = SCHEMA[sec][key][0]
            try:
                st.values[sec][key] = conv(raw)
            except ValueError as e:
                raise ConfigError(f"{path}: line {_line_of(text, sec, key)}: bad value for {key!r}: {e}") from None
    st.primitives = prims
    _validate(st)
    return st


def load(path) -> Settings:
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except UnicodeDecodeError as e:
        raise ConfigError(f"{path}: byte offset {e.start}: not valid UTF-8") from None
    return parse(text, str(path))


def _validate(st: Settings) -> None:
    """Cross-field checks by constructing the typed objects."""
    v = st.values
    if v["run"]["threads"] < 1:
        raise ConfigError(f"{st.source}: [run] threads must be >= 1")
    if v["phantom"]["kind"] not in PHANTOM_KINDS:
        raise ConfigError(f"{st.source}: [phantom] kind must be one of {PHANTOM_KINDS}")
    if v["dataset"]["regime"] not in ("noisy", "clean"):
        raise ConfigError(f"{st.source}: [dataset] regime must be noisy or clean")
    if v["pipeline"]["inpaint_method"] not in ("harmonic", "linear"):
        raise ConfigError(f"{st.source}: [pipeline] inpaint_method must be harmonic or linear")
    if v["pipeline"]["connectivity"] not in (6, 26):
        raise ConfigError(f"{st.source}: [pipeline] connectivity must be 6 or 26")
    d = v["dataset"]
    if min(d["n_train"], d["n_val"], d["view_step"], d["val_view_step"]) < 1:
        raise ConfigError(f"{st.source}: [dataset] n_train, n_val and view steps must be >= 1")
    if d["n_test_metal"] < 0 or d["n_test_free"] < 0:
        raise ConfigError(f"{st.source}: [dataset] test counts must be >= 0")
    try:
        st.geometry()
        st.grid()
        st.pipeline()
        st.train()
        for s in v["experiment"]["strategies"]:
            st.train(strategy=s)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{st.source}: {e}") from None
    if not v["experiment"]["seeds"]:
        raise ConfigError(f"{st.source}: [experiment] seeds must not be empty")


def dump(st: Settings) -> str:
    """Canonical text form (custom primitives are not serialized)."""
    out = []
    for sec, keys in SCHEMA.items():
        out.append(f"[{sec}]")
        for k in keys:
            val = st.values[sec][k]
            if isinstance(val, tuple):
                val = ", ".join(str(x) for x in val)
            elif isinstance(val, bool):
                val = "true" if val else "false"
            elif isinstance(val, float):
                val = repr(val)
            out.append(f"{k} = {val}")
        out.append("")
    return "\n".join(out)


__all__ = ["ConfigError", "Settings", "SCHEMA", "defaults", "parse", "load", "dump", "PHANTOM_KINDS"]
