"""Experiment configuration: YAML parsing, method construction, model files.

One YAML file drives the whole pipeline; each CLI command reads the
sections it needs. Model files are self-describing JSON so a sensor can
be reloaded and applied without the dataset it was designed on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from .dataio import FeatureSpec, PctFeature, RatioFeature, Scaler
from .errors import ConfigError
from .regress import (
    LassoConfig,
    SensorModel,
    fit_fixed,
    fit_lasso,
    fit_ols,
    fit_pca_regression,
    fit_pls,
    tune_lambda,
)
from .subset import SearchLog, SubsetConfig, best_subset, ss_cv_design

KNOWN_METHODS = ("ols", "pca", "pls", "lasso", "ss", "ss_cv", "ref")
METHOD_LABELS = {
    "ols": "OLSR", "pca": "PCA", "pls": "PLS", "lasso": "LASSO",
    "ss": "SS", "ss_cv": "SS-CV", "ref": "Ref",
}


@dataclass
class ExperimentConfig:
    dataset: str
    output_column: str
    time_column: str | None = None
    features: FeatureSpec = field(default_factory=FeatureSpec)
    exclude_ranges: tuple = ()
    scaler_kind: str = "standardize"
    scaler_fit_on: str = "train"       # or "all"
    treatment: dict = field(default_factory=dict)
    split_kind: str = "chronological"
    split_fraction: float = 0.5
    split_seed: int | None = None
    methods: dict = field(default_factory=dict)
    theta: float = 1.0
    prune_threshold: float = 0.001
    eval_repeats: int = 50
    out_dir: str = "."
    seed: int = 0
    plots: bool = True

    def __post_init__(self):
        if self.scaler_fit_on not in ("train", "all"):
            raise ConfigError("scaler fit_on must be 'train' or 'all'")
        for name in self.methods:
            if name not in KNOWN_METHODS:
                raise ConfigError(f"unknown design method {name!r}")


def _feature_spec(entries) -> FeatureSpec:
    feats = []
    for e in entries or []:
        kind = e.get("kind")
        if kind == "ratio":
            feats.append(RatioFeature(e["name"], e["numerator"], e["denominator"]))
        elif kind == "pct":
            feats.append(
                PctFeature(
                    e["name"], e["temperature"], e["pressure"],
                    float(e["r_over_hv"]), float(e["p_ref"]),
                )
            )
        else:
            raise ConfigError(f"unknown feature kind {kind!r}")
    return FeatureSpec(features=tuple(feats))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    for key in ("dataset", "output_column"):
        if key not in raw:
            raise ConfigError(f"config {path} is missing the {key!r} field")

    split_cfg = raw.get("split", {}) or {}
    scaler_cfg = raw.get("scaler", {}) or {}
    eval_cfg = raw.get("evaluation", {}) or {}
    try:
        return ExperimentConfig(
            dataset=str(raw["dataset"]),
            output_column=str(raw["output_column"]),
            time_column=raw.get("time_column"),
            features=_feature_spec(raw.get("features")),
            exclude_ranges=tuple(
                (int(a), int(b)) for a, b in (raw.get("exclude_ranges") or [])
            ),
            scaler_kind=scaler_cfg.get("kind", "standardize"),
            scaler_fit_on=scaler_cfg.get("fit_on", "train"),
            treatment=raw.get("treatment", {}) or {},
            split_kind=split_cfg.get("kind", "chronological"),
            split_fraction=float(split_cfg.get("fraction", 0.5)),
            split_seed=split_cfg.get("seed"),
            methods=raw.get("methods", {}) or {},
            theta=float(eval_cfg.get("theta", 1.0)),
            prune_threshold=float(eval_cfg.get("prune_threshold", 0.001)),
            eval_repeats=int(eval_cfg.get("repeats", 50)),
            out_dir=str(raw.get("out_dir", ".")),
            seed=int(raw.get("seed", 0)),
            plots=bool(raw.get("plots", True)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc


def build_fitters(methods: dict, default_seed: int = 0) -> dict:
    """Turn the config's method table into fit closures.

    Every closure has the signature (M_N, y_N, columns, scaler, seed) and
    returns a SensorModel.
    """
    if not methods:
        raise ConfigError("no design methods configured")
    fitters = {}
    for name, params in methods.items():
        params = params or {}
        if name == "ols":
            fitters[name] = lambda M, y, c, s, seed: fit_ols(M, y, c, s)
        elif name == "pca":
            vt = float(params.get("variance_target", 0.98))
            fitters[name] = (
                lambda vt: lambda M, y, c, s, seed: fit_pca_regression(M, y, vt, c, s)[0]
            )(vt)
        elif name == "pls":
            vt = float(params.get("variance_target", 0.98))
            fitters[name] = (
                lambda vt: lambda M, y, c, s, seed: fit_pls(M, y, vt, c, s)[0]
            )(vt)
        elif name == "lasso":
            fixed_lam = params.get("lambda")
            criteria = tuple(params.get("criteria", ("r2adj", "aicc", "bic")))
            cv_repeats = int(params.get("cv_repeats", 20))

            def lasso_fitter(M, y, c, s, seed, _lam=fixed_lam, _cr=criteria, _cv=cv_repeats):
                if _lam is None:
                    lam, _ = tune_lambda(M, y, _cr, cv_repeats=_cv, seed=seed)
                else:
                    lam = float(_lam)
                return fit_lasso(M, y, LassoConfig(lam=lam), c, s)

            fitters[name] = lasso_fitter
        elif name == "ss":
            kind = params.get("criterion", "r2adj")
            cfg = SubsetConfig(
                a_bound=params.get("a_bound"),
                exact_limit=int(params.get("exact_limit", 16)),
                node_budget=int(params.get("node_budget", 200_000)),
            )
            want_log = bool(params.get("search_log", False))

            def ss_fitter(M, y, c, s, seed, _kind=kind, _cfg=cfg, _want=want_log):
                log = SearchLog() if _want else None
                model = best_subset(M, y, _kind, _cfg, c, s, log=log)
                if _want:
                    model.info["search_log"] = log.as_text()
                return model

            fitters[name] = ss_fitter
        elif name == "ss_cv":
            k_max = int(params.get("k_max", 6))
            repeats = int(params.get("repeats", 10))
            cfg = SubsetConfig(
                a_bound=params.get("a_bound"),
                exact_limit=int(params.get("exact_limit", 16)),
                node_budget=int(params.get("node_budget", 200_000)),
            )
            fitters[name] = (
                lambda k_max, repeats, cfg: lambda M, y, c, s, seed: ss_cv_design(
                    M, y, K_max=k_max, repeats=repeats, seed=seed, cfg=cfg,
                    columns=c, scaler=s,
                )
            )(k_max, repeats, cfg)
        elif name == "ref":
            support_names = tuple(params.get("support", ()))
            if not support_names:
                raise ConfigError("ref method needs a 'support' list of column names")

            def ref_fitter(M, y, c, s, seed, _names=support_names):
                mask = np.zeros(M.shape[1], dtype=bool)
                for nm in _names:
                    if nm not in c:
                        raise ConfigError(f"ref support column {nm!r} not in the dataset")
                    mask[c.index(nm)] = True
                return fit_fixed(M, y, mask, c, s)

            fitters[name] = ref_fitter
        else:
            raise ConfigError(f"unknown design method {name!r}")
    return fitters


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


def model_to_json(model: SensorModel, path) -> None:
    a_eng, a0_eng = model.engineering_coefficients()
    zb = np.asarray(model.z, dtype=bool)
    doc = {
        "method": model.method,
        "columns": list(model.columns),
        "selected": list(model.selected_names),
        "engineering_coefficients": {
            c: a_eng[j].item() for j, c in enumerate(model.columns) if zb[j]
        },
        "engineering_bias": float(a0_eng),
        "latent_components": int(model.n_components),
        "normalized_coefficients": model.a.tolist(),
        "normalized_bias": float(model.a0),
        "scaler": {
            "kind": model.scaler.kind,
            "columns": list(model.scaler.columns),
            "x_center": model.scaler.x_center.tolist(),
            "x_scale": model.scaler.x_scale.tolist(),
            "y_center": model.scaler.y_center,
            "y_scale": model.scaler.y_scale,
        },
        "info": _jsonable(model.info),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def model_from_json(path) -> SensorModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read model {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed model file {path}: {exc}") from exc
    sc = doc["scaler"]
    scaler = Scaler(
        kind=sc["kind"],
        columns=tuple(sc["columns"]),
        x_center=np.asarray(sc["x_center"], dtype=float),
        x_scale=np.asarray(sc["x_scale"], dtype=float),
        y_center=float(sc["y_center"]),
        y_scale=float(sc["y_scale"]),
    )
    a = np.asarray(doc["normalized_coefficients"], dtype=float)
    columns = tuple(doc["columns"])
    z = np.array([c in set(doc["selected"]) for c in columns])
    return SensorModel(
        method=doc["method"],
        columns=columns,
        z=z,
        a=a,
        a0=float(doc["normalized_bias"]),
        scaler=scaler,
        n_components=int(doc.get("latent_components", 0)),
        info=doc.get("info", {}),
    )


def load_plant_spec(path):
    """Read a synthetic-plant YAML spec; indices are 1-based in the file."""
    from .synth import PlantSpec, RegimeShift

    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read plant spec {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed plant spec {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("plant spec must be a mapping")
    try:
        n = int(raw["n"])
        spec = PlantSpec(
            n_p=int(raw["n_p"]),
            true_support=tuple(int(j) - 1 for j in raw["true_support"]),
            true_coefficients=tuple(float(c) for c in raw["true_coefficients"]),
            noise_sd=float(raw.get("noise_sd", 0.1)),
            blocks=tuple(
                (tuple(int(j) - 1 for j in b["columns"]), float(b["rho"]))
                for b in (raw.get("blocks") or [])
            ),
            contamination=float(raw.get("contamination", 0.0)),
            outlier_magnitude=float(raw.get("outlier_magnitude", 8.0)),
            shutdowns=tuple(
                (int(a), int(b)) for a, b in (raw.get("shutdowns") or [])
            ),
            shutdown_shift=float(raw.get("shutdown_shift", 6.0)),
            regimes=tuple(
                RegimeShift(
                    start=int(r["start"]), end=int(r["end"]),
                    bias_delta=float(r.get("bias_delta", 0.0)),
                    coef_delta={
                        int(k) - 1: float(v)
                        for k, v in (r.get("coef_delta") or {}).items()
                    },
                )
                for r in (raw.get("regimes") or [])
            ),
            lab_stride=int(raw.get("lab_stride", 1)),
            seed=int(raw.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed plant spec {path}: {exc}") from exc
    return spec, n
