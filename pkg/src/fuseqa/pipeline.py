"""End-to-end experiment: data -> per-modality heads -> fusion -> thresholds
-> metrics -> template VQA. Backs the ``run`` command and the acceptance suite.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict, fields
from pathlib import Path

import numpy as np

from . import fusion, questions, sarprep, synth
from .fileio import read_jsonl, read_matrix_csv
from .metrics import metric_report
from .taxonomy import RSVQA61, Nomenclature, class_frequencies, inverse_frequency_weights, resolve_nomenclature

NONE_S1, NONE_S2, EARLY, LATE = "NONE_S1", "NONE_S2", "EARLY", "LATE"
RANDOM, SHIFTED = "RANDOM", "SHIFTED"
STAGES = ("s1", "s2", "ef", "lf")
STAGES_FOR = {NONE_S1: ("s1",), NONE_S2: ("s2",), EARLY: ("s1", "s2", "ef"), LATE: ("s1", "s2", "lf")}
PRIMARY_STAGE = {NONE_S1: "s1", NONE_S2: "s2", EARLY: "ef", LATE: "lf"}

# step -> (nomenclature, split regime, weighted loss)
STEP_PRESETS = {
    "A": (RSVQA61, RANDOM, True),
    "B": (RSVQA61, SHIFTED, True),
    "C": (RSVQA61, SHIFTED, False),
}

TABLE_COLUMNS = ("F1Micro", "HD", "MR", "GA", "Y/N A", "LC A")


class ConfigError(ValueError):
    pass


class DataContractError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    step: str = "CUSTOM"
    nomenclature: str | list = RSVQA61
    split: str = RANDOM
    weighted_loss: bool = True
    sar_mode: str = sarprep.THREE_CH
    fusion: str = LATE
    seed: int = 0
    train: dict = field(default_factory=dict)
    fusion_train: dict = field(default_factory=dict)
    synth: dict = field(default_factory=dict)
    data: dict | None = None
    shift_sigmas: float = 2.0
    sar_rasters: bool = True
    raster_size: int = 16
    saturation_quantiles: tuple[float, float] = (0.01, 0.99)
    summary_quantiles: tuple[float, ...] = (0.1, 0.5, 0.9)
    lf_folds: int = 5
    questions_per_sample: int = questions.QUESTIONS_PER_SAMPLE
    question_mix: tuple[float, float, float] = questions.DEFAULT_MIX
    threshold_beta: float = 2.0
    grid_step: float = 0.05
    threshold_mode: str = "per_class"
    report_beta: float = 2.0

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        doc = dict(doc)
        step = str(doc.get("step", "CUSTOM")).upper()
        doc["step"] = step
        if step in STEP_PRESETS:
            preset = dict(zip(("nomenclature", "split", "weighted_loss"), STEP_PRESETS[step]))
            for key, value in preset.items():
                if key in doc and doc[key] != value:
                    raise ConfigError(f"step {step} requires {key}={value!r}, config has {doc[key]!r}")
                doc[key] = value
        elif step != "CUSTOM":
            raise ConfigError(f"unknown step {step!r}")
        for key in ("saturation_quantiles", "summary_quantiles", "question_mix"):
            if key in doc:
                doc[key] = tuple(doc[key])
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.split not in (RANDOM, SHIFTED):
            raise ConfigError(f"split must be RANDOM or SHIFTED, got {self.split!r}")
        if self.fusion not in STAGES_FOR:
            raise ConfigError(f"fusion must be one of {sorted(STAGES_FOR)}, got {self.fusion!r}")
        if self.sar_mode not in (sarprep.TWO_CH, sarprep.THREE_CH):
            raise ConfigError(f"sar_mode must be TWO_CH or THREE_CH, got {self.sar_mode!r}")
        if self.threshold_mode not in ("per_class", "global"):
            raise ConfigError("threshold_mode must be per_class or global")
        try:
            self.train_config()
            self.fusion_train_config(1)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad training config: {exc}") from exc

    def train_config(self) -> fusion.TrainConfig:
        kw = {"seed": self.seed, "weighted": self.weighted_loss}
        kw.update(self.train)
        return fusion.TrainConfig(**kw)

    def fusion_train_config(self, n_classes: int) -> fusion.TrainConfig:
        kw = {"seed": self.seed, "weighted": self.weighted_loss, "epochs": 200,
              "hidden_width": fusion.late_fusion_width(n_classes)}
        kw.update(self.fusion_train)
        return fusion.TrainConfig(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("saturation_quantiles", "summary_quantiles", "question_mix"):
            d[key] = list(d[key])
        return d


@dataclass
class SplitData:
    labels: np.ndarray
    features: dict[str, np.ndarray]
    sample_ids: list
    probs: dict[str, np.ndarray] = field(default_factory=dict)


def synth_config(cfg: ExperimentConfig, nom: Nomenclature) -> synth.SynthConfig:
    opts = dict(cfg.synth)
    preset = opts.pop("preset", "complementary")
    opts.setdefault("seed", cfg.seed)
    if cfg.split == SHIFTED:
        opts.setdefault("domain_shift", cfg.shift_sigmas * opts.get("noise_sigma", 0.5))
    if preset == "complementary":
        return synth.complementary_preset(nom, **opts)
    if preset == "uniform":
        return synth.SynthConfig(nom, **opts)
    raise ConfigError(f"unknown synth preset {preset!r}")


def _sar_summary_features(cfg: ExperimentConfig, scfg: synth.SynthConfig, ds: synth.SynthDataset) -> dict:
    pairs = {}
    for name in synth.SPLITS:
        sp = ds[name]
        pairs[name] = [synth.gen_sar_pair(sp.labels[i], scfg, cfg.raster_size, int(sp.indices[i]))
                       for i in range(len(sp))]
    lo_q, hi_q = cfg.saturation_quantiles
    bounds = sarprep.compute_saturation_bounds((sarprep.stack_raw(vv, vh) for vv, vh in pairs["train"]), lo_q, hi_q)
    return {
        name: np.stack([
            sarprep.summarize_features(sarprep.assemble_sar_input(vv, vh, cfg.sar_mode, bounds), cfg.summary_quantiles)
            for vv, vh in pairs[name]
        ])
        for name in synth.SPLITS
    }


def load_synthetic(cfg: ExperimentConfig, nom: Nomenclature) -> tuple[dict[str, SplitData], dict]:
    scfg = synth_config(cfg, nom)
    ds = synth.gen_dataset(scfg)
    sar = _sar_summary_features(cfg, scfg, ds) if cfg.sar_rasters else None
    out = {}
    for name in synth.SPLITS:
        sp = ds[name]
        feats = dict(sp.features)
        if sar is not None:
            feats["s1"] = np.hstack([feats["s1"], sar[name]])
        out[name] = SplitData(sp.labels.astype(np.uint8), feats, [int(i) for i in sp.indices])
    return out, scfg.to_dict()


def load_external(cfg: ExperimentConfig, nom: Nomenclature) -> tuple[dict[str, SplitData], dict]:
    """Per split: ``labels`` CSV plus ``s1``/``s2`` feature CSVs and/or
    ``s1_probs``/``s2_probs`` probability CSVs, all keyed by ``sample_id``."""
    out = {}
    for name in synth.SPLITS:
        entry = cfg.data.get(name)
        if entry is None or "labels" not in entry:
            raise ConfigError(f"data.{name}.labels missing")
        ids, labels = read_matrix_csv(entry["labels"], dtype=np.uint8)
        if labels.shape[1] != len(nom):
            raise DataContractError(f"{name} labels have {labels.shape[1]} classes, nomenclature has {len(nom)}")
        split = SplitData(labels, {}, ids)
        for key, path in entry.items():
            if key == "labels":
                continue
            m_ids, values = read_matrix_csv(path)
            if m_ids != ids:
                raise DataContractError(f"{path}: sample ids do not match {entry['labels']}")
            if key.endswith("_probs"):
                if values.shape[1] != len(nom):
                    raise DataContractError(f"{path}: expected {len(nom)} probability columns")
                split.probs[key[:-6]] = values
            else:
                split.features[key] = values
        out[name] = split
    return out, {"external": cfg.data}


def _fit_predict(x_train, y_train, w, tcfg, others):
    scaler = fusion.Standardizer.fit(x_train)
    model = fusion.train_classifier(scaler(x_train), y_train, w, tcfg)
    return [fusion.predict_probs(model, scaler(x)) for x in others]


def _out_of_fold(x, y, w, tcfg, folds: int) -> np.ndarray:
    """Cross-fitted training-set probabilities, so the fusion head sees honest inputs."""
    oof = np.zeros(y.shape, dtype=float)
    assign = np.arange(x.shape[0]) % folds
    for k in range(folds):
        held = assign == k
        (oof[held],) = _fit_predict(x[~held], y[~held], w, tcfg, [x[held]])
    return oof


def _modality_probs(cfg, data, modality, w, tcfg, need_train: bool) -> dict[str, np.ndarray]:
    tr = data["train"]
    if modality in tr.probs:
        return {name: data[name].probs[modality] for name in synth.SPLITS}
    if modality not in tr.features:
        raise DataContractError(f"no features or probabilities for modality {modality!r}")
    x = tr.features[modality]
    val, test = _fit_predict(x, tr.labels, w, tcfg, [data["val"].features[modality], data["test"].features[modality]])
    out = {"val": val, "test": test}
    if need_train:
        if cfg.lf_folds > 1:
            out["train"] = _out_of_fold(x, tr.labels, w, tcfg, cfg.lf_folds)
        else:
            (out["train"],) = _fit_predict(x, tr.labels, w, tcfg, [x])
    return out


def _test_questions(cfg, data, nom) -> list[list[questions.QaRecord]]:
    te = data["test"]
    if cfg.data and cfg.data.get("questions"):
        by_sample: dict[str, list] = {str(sid): [] for sid in te.sample_ids}
        for rec in read_jsonl(cfg.data["questions"]):
            key = str(rec["sample_id"])
            if key not in by_sample:
                raise DataContractError(f"question for unknown test sample {key!r}")
            by_sample[key].append(questions.QaRecord.from_json(rec))
        return [by_sample[str(sid)] for sid in te.sample_ids]
    return [
        questions.generate_questions(te.labels[i], nom, cfg.questions_per_sample, cfg.question_mix,
                                     seed=cfg.seed, sample_id=sid)
        for i, sid in enumerate(te.sample_ids)
    ]


def stage_probabilities(cfg: ExperimentConfig, data: dict[str, SplitData], nom: Nomenclature) -> dict:
    """Validation and test probabilities for every stage the fusion mode needs."""
    tr = data["train"]
    w = inverse_frequency_weights(class_frequencies(tr.labels), tr.labels.shape[0])
    tcfg = cfg.train_config()
    stages = STAGES_FOR[cfg.fusion]
    probs = {}
    for modality in ("s1", "s2"):
        if modality in stages:
            probs[modality] = _modality_probs(cfg, data, modality, w, tcfg, need_train="lf" in stages)
    if "ef" in stages:
        cat = {name: np.hstack([data[name].features["s1"], data[name].features["s2"]]) for name in synth.SPLITS}
        val, test = _fit_predict(cat["train"], tr.labels, w, tcfg, [cat["val"], cat["test"]])
        probs["ef"] = {"val": val, "test": test}
    if "lf" in stages:
        fcfg = cfg.fusion_train_config(len(nom))
        model = fusion.late_fuse_train(probs["s1"]["train"], probs["s2"]["train"], tr.labels, w, fcfg)
        probs["lf"] = {
            name: fusion.late_fuse_predict(model, probs["s1"][name], probs["s2"][name]) for name in ("val", "test")
        }
    return probs


def run_experiment(cfg: ExperimentConfig) -> dict:
    started = time.perf_counter()
    nom = resolve_nomenclature(cfg.nomenclature)
    if cfg.data:
        data, provenance = load_external(cfg, nom)
    else:
        data, provenance = load_synthetic(cfg, nom)
    for name, sp in data.items():
        for key, arr in {**sp.features, **sp.probs}.items():
            if arr.shape[0] != sp.labels.shape[0]:
                raise DataContractError(f"{name}.{key} has {arr.shape[0]} rows for {sp.labels.shape[0]} samples")

    probs = stage_probabilities(cfg, data, nom)
    qa = _test_questions(cfg, data, nom)
    val_y, test_y = data["val"].labels, data["test"].labels

    stages = {}
    for stage in STAGES:
        if stage not in probs:
            stages[stage] = None
            continue
        t = fusion.optimize_thresholds(probs[stage]["val"], val_y, cfg.threshold_beta, cfg.grid_step,
                                       cfg.threshold_mode)
        pred = fusion.apply_thresholds(probs[stage]["test"], t)
        report = metric_report(pred, test_y, nom.names, cfg.report_beta)
        val_report = metric_report(fusion.apply_thresholds(probs[stage]["val"], t), val_y, nom.names,
                                   cfg.report_beta)
        vqa = questions.evaluate_vqa(pred, test_y, qa, nom)
        stages[stage] = {
            "metrics": report.to_dict(),
            "validation_f_beta_macro": val_report.macro,
            "vqa": vqa,
            "thresholds": t.tolist(),
            "table": table_row(report.to_dict(), vqa),
        }

    return {
        "config": cfg.to_dict(),
        "data": provenance,
        "nomenclature": nom.names,
        "primary_stage": PRIMARY_STAGE[cfg.fusion],
        "stages": stages,
        "seed": cfg.seed,
        "n_questions": sum(len(q) for q in qa),
        "wall_time_s": time.perf_counter() - started,
    }


def table_row(metrics: dict, vqa: dict) -> dict:
    return {
        "F1Micro": metrics["f1_micro"],
        "HD": metrics["hamming_distance"],
        "MR": metrics["match_ratio"],
        "GA": vqa["global"],
        "Y/N A": vqa["yes_no"],
        "LC A": vqa["land_cover"],
    }


def strip_volatile(report: dict) -> dict:
    return {k: v for k, v in report.items() if k != "wall_time_s"}


def load_config(path) -> ExperimentConfig:
    import json

    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return ExperimentConfig.from_dict(doc)
