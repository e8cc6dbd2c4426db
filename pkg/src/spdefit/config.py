"""Configuration documents: defaults, file parsing, and overrides.

Configurations are JSON documents with the sections ``params``, ``grid``,
``estimation``, ``study``, an optional top-level ``seed`` for single
simulations, and an optional ``gallery`` section.  An empty document is
valid and yields the desk-scale fixed-horizon defaults.  Command-line
overrides use dotted paths (``--set grid.n_time=4000``) and win over file
values; unknown keys are errors, never silently ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, ValidationError
from .estimate import EstimationConfig, Regime
from .model import SpdeParams
from .simulate import GridSpec
from .study import StudyConfig

#: Default parameter variations of the sample-path gallery: each group
#: changes a single component of theta.  theta0 = +5 is absent because it
#: makes the first two modes non-dissipative, which the simulator rejects.
GALLERY_DEFAULT_PARAMS = [
    [0.0, 0.1, 0.1, 0.1],
    [0.0, 0.1, 0.1, 1.0],
    [0.0, 0.1, 0.1, 10.0],
    [0.0, 0.5, 0.1, 1.0],
    [0.0, 1.0, 0.1, 1.0],
    [0.0, -0.1, 0.1, 1.0],
    [0.0, -0.5, 0.1, 1.0],
    [0.0, -1.0, 0.1, 1.0],
    [0.0, 0.1, 0.01, 1.0],
    [0.0, 0.1, 1.0, 1.0],
    [-5.0, 0.1, 0.1, 1.0],
]


def default_document(regime: str = "fixed_t") -> dict:
    """Desk-scale defaults for one regime, as a plain JSON-style document."""
    if regime == "fixed_t":
        return {
            "params": {"theta0": 0.0, "theta1": 0.5, "theta2": 0.1, "sigma": 1.0},
            "grid": {"n_time": 2000, "n_space": 2000, "horizon": 1.0,
                     "n_modes": 20000},
            "estimation": {"regime": "fixed_t", "delta_margin": 0.05,
                           "m_spatial": 20, "n2_temporal": 100,
                           "eta_bounds": [0.0, 20.0],
                           "sigma0sq_bounds": [1e-3, 1e3],
                           "lambda_bounds": [1e-4, 1e3]},
            "study": {"replications": 200, "base_seed": 1234},
            "seed": 42,
            "gallery": {"params": [list(p) for p in GALLERY_DEFAULT_PARAMS]},
        }
    if regime == "large_t":
        doc = default_document("fixed_t")
        doc["params"] = {"theta0": 0.0, "theta1": 0.2, "theta2": 0.2, "sigma": 1.0}
        doc["grid"] = {"n_time": 10000, "n_space": 4000, "horizon": 25.0,
                       "n_modes": 20000}
        doc["estimation"].update({"regime": "large_t", "m_spatial": 12,
                                  "n2_temporal": 200})
        doc["study"] = {"replications": 150, "base_seed": 1234}
        return doc
    raise ConfigError(f"estimation.regime must be 'fixed_t' or 'large_t', got {regime!r}")


@dataclass(frozen=True)
class FullConfig:
    """A validated configuration plus its echo-able document form."""

    params: SpdeParams
    grid: GridSpec
    est: EstimationConfig
    replications: int
    base_seed: int
    seed: int
    gallery_params: list[SpdeParams]
    document: dict

    def study_config(self) -> StudyConfig:
        return StudyConfig(params_true=self.params, grid=self.grid, est=self.est,
                           replications=self.replications, base_seed=self.base_seed)


def _parse_override(text: str) -> tuple[list[str], object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def _apply_override(doc: dict, path: list[str], value: object, full_key: str) -> None:
    node = doc
    for part in path[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {full_key!r} descends into a non-section value")
    node[path[-1]] = value


def _merge(defaults: dict, overrides: dict, prefix: str = "") -> dict:
    """Defaults updated by overrides; keys absent from defaults are errors."""
    merged = dict(defaults)
    for key, value in overrides.items():
        full = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown configuration key {full!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"configuration key {full!r} must be a section")
            merged[key] = _merge(defaults[key], value, prefix=f"{full}.")
        else:
            merged[key] = value
    return merged


def _require_int(doc_value, key: str) -> int:
    if isinstance(doc_value, bool) or not isinstance(doc_value, int):
        raise ConfigError(f"configuration key {key!r} must be an integer, got {doc_value!r}")
    return doc_value


def _require_number(doc_value, key: str) -> float:
    if isinstance(doc_value, bool) or not isinstance(doc_value, (int, float)):
        raise ConfigError(f"configuration key {key!r} must be a number, got {doc_value!r}")
    return float(doc_value)


def _require_pair(doc_value, key: str) -> tuple[float, float]:
    if not isinstance(doc_value, (list, tuple)) or len(doc_value) != 2:
        raise ConfigError(f"configuration key {key!r} must be a [low, high] pair")
    return (_require_number(doc_value[0], key), _require_number(doc_value[1], key))


def load_config(path: str | Path | None = None,
                overrides: list[str] | None = None) -> FullConfig:
    """Parse a configuration file plus overrides into validated objects.

    Defaults are selected by the effective ``estimation.regime`` (from the
    file or an override) before merging, so switching regimes also
    switches the desk-scale default grid and study plan.
    """
    if path is None:
        doc = {}
    else:
        text = Path(path).read_text()
        if not text.strip():
            doc = {}
        else:
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"configuration file {path} is not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise ConfigError(f"configuration file {path} must contain a JSON object")
    for text in overrides or []:
        key_path, value = _parse_override(text)
        _apply_override(doc, key_path, value, text)

    regime_name = doc.get("estimation", {}).get("regime", "fixed_t")
    merged = _merge(default_document(regime_name), doc)

    p = merged["params"]
    g = merged["grid"]
    e = merged["estimation"]
    s = merged["study"]
    try:
        params = SpdeParams(theta0=_require_number(p["theta0"], "params.theta0"),
                            theta1=_require_number(p["theta1"], "params.theta1"),
                            theta2=_require_number(p["theta2"], "params.theta2"),
                            sigma=_require_number(p["sigma"], "params.sigma"))
        grid = GridSpec(n_time=_require_int(g["n_time"], "grid.n_time"),
                        n_space=_require_int(g["n_space"], "grid.n_space"),
                        horizon=_require_number(g["horizon"], "grid.horizon"),
                        n_modes=_require_int(g["n_modes"], "grid.n_modes"))
        if e["regime"] not in ("fixed_t", "large_t"):
            raise ConfigError(
                f"estimation.regime must be 'fixed_t' or 'large_t', got {e['regime']!r}")
        est = EstimationConfig(
            regime=Regime(e["regime"]),
            delta_margin=_require_number(e["delta_margin"], "estimation.delta_margin"),
            m_spatial=_require_int(e["m_spatial"], "estimation.m_spatial"),
            n2_temporal=_require_int(e["n2_temporal"], "estimation.n2_temporal"),
            eta_bounds=_require_pair(e["eta_bounds"], "estimation.eta_bounds"),
            sigma0sq_bounds=_require_pair(e["sigma0sq_bounds"],
                                          "estimation.sigma0sq_bounds"),
            lambda_bounds=_require_pair(e["lambda_bounds"], "estimation.lambda_bounds"),
        )
        replications = _require_int(s["replications"], "study.replications")
        if replications < 2:
            raise ConfigError("study.replications must satisfy >= 2")
        gallery = []
        for idx, entry in enumerate(merged["gallery"]["params"]):
            if not isinstance(entry, (list, tuple)) or len(entry) != 4:
                raise ConfigError(
                    f"gallery.params[{idx}] must be [theta0, theta1, theta2, sigma]")
            gallery.append(SpdeParams(*[_require_number(v, f"gallery.params[{idx}]")
                                        for v in entry]))
    except ValidationError as exc:
        # Re-raise dataclass validation with config context preserved.
        raise ConfigError(str(exc)) from exc
    return FullConfig(params=params, grid=grid, est=est,
                      replications=replications,
                      base_seed=_require_int(s["base_seed"], "study.base_seed"),
                      seed=_require_int(merged["seed"], "seed"),
                      gallery_params=gallery, document=merged)
