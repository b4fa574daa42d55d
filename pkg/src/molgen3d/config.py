"""Run configuration: one JSON document drives every pipeline stage.

The diffusion section names its hyperparameters exactly as the training
recipe table does ("n layers", "atom hidden size", "init lr", ...). Keys
the table does not cover use snake_case so the two vocabularies stay
visually distinct. A config is identified by the sha256 of its canonical
dump; artifacts embed that hash plus the seed so reruns are checkable.

Relative dataset paths resolve against $MOLGEN3D_DATA_ROOT when set,
otherwise against the config file's own directory.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

from .bridge import ProjectorConfig
from .diffusion import DenoiserConfig, DiffusionTrainConfig
from .lm import LmConfig

DATA_ROOT_ENV = "MOLGEN3D_DATA_ROOT"

# Hyperparameter names from the published training recipe, required
# verbatim in the "diffusion" section.
TABLE_KEYS = (
    "n layers",
    "atom hidden size",
    "atom intermediate size",
    "pair hidden size",
    "pair intermediate size",
    "n heads",
    "total params",
    "optimizer",
    "init lr",
    "min lr",
    "warmup lr",
    "warmup steps",
    "weight decay",
)


class ConfigError(ValueError):
    """The config document is malformed or references missing files."""


def default_document() -> dict:
    """Desk-scale defaults; the table keys keep their published names."""
    return {
        "seed": 7,
        "workers": 4,
        "dataset": {
            "path": "toy.jsonl",
            "format": "jsonl",
            "split_fractions": [0.8, 0.1, 0.1],
        },
        "lm": {
            "n_layers": 4,
            "hidden_dim": 192,
            "n_heads": 6,
            "max_seq_len": 64,
            "dropout_rate": 0.0,
            "epochs": 40,
            "batch_size": 16,
            "lr": 3e-4,
            "weight_decay": 0.0,
            "grad_clip": 1.0,
            "prompt_tokens": 4,
        },
        "bridge": {
            "n_layers": 2,
            "hidden_dim": 192,
            "n_heads": 6,
            "ffn_dim": 384,
            "n_queries": 8,
            "cond_dim": 96,
        },
        "diffusion": {
            "n layers": 4,
            "atom hidden size": 128,
            "atom intermediate size": 512,
            "pair hidden size": 32,
            "pair intermediate size": 128,
            "n heads": 4,
            "total params": None,
            "optimizer": "AdamW",
            "init lr": 1e-4,
            "min lr": 1e-5,
            "warmup lr": 1e-6,
            "warmup steps": 1000,
            "weight decay": 0.05,
            "schedule": "cosine",
            "total_steps_T": 1000,
            "epochs": 60,
            "batch_size": 16,
            "grad_clip": 1.0,
            "rotation_augment": True,
            "use_lr_schedule": True,
            "fixed_lr": 1e-3,
            "dropout": 0.0,
            "n_rbf": 16,
            "r_max": 8.0,
        },
        "sampling": {
            "temperature": 1.0,
            "beam_size": 1,
            "max_len": 48,
            "steps": 50,
        },
        "ablation": {
            "zero_bridge": False,
            "finetune_lm": False,
        },
        "conditional": {
            "property": None,
        },
    }


def _require(doc: dict, key: str, kind, where: str):
    if key not in doc:
        raise ConfigError(f"{where}: missing key {key!r}")
    value = doc[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{where}.{key}: expected number, got {value!r}")
        return float(value)
    if kind is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{where}.{key}: expected integer, got {value!r}")
        return value
    if not isinstance(value, kind):
        raise ConfigError(f"{where}.{key}: expected {kind.__name__}, got {value!r}")
    return value


def canonical_dump(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(doc: dict) -> str:
    return hashlib.sha256(canonical_dump(doc).encode("ascii")).hexdigest()


class RunConfig:
    """Validated view over the JSON document, plus typed sub-configs."""

    def __init__(self, doc: dict, base_dir: Path | None = None):
        self.doc = copy.deepcopy(doc)
        self.base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
        self._validate()

    # -- loading ---------------------------------------------------------------

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})")
        cfg = cls(doc, base_dir=path.parent)
        dataset = cfg.dataset_path()
        if not dataset.exists():
            raise ConfigError(f"dataset path does not exist: {dataset}")
        return cfg

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.doc, indent=2) + "\n")

    # -- validation --------------------------------------------------------------

    def _validate(self) -> None:
        doc = self.doc
        for section in ("dataset", "lm", "bridge", "diffusion", "sampling",
                        "ablation", "conditional"):
            _require(doc, section, dict, "config")
        _require(doc, "seed", int, "config")
        _require(doc, "workers", int, "config")
        if doc["workers"] < 1:
            raise ConfigError("config.workers must be >= 1")

        ds = doc["dataset"]
        _require(ds, "path", str, "dataset")
        fmt = _require(ds, "format", str, "dataset")
        if fmt not in ("jsonl", "xyz_dir"):
            raise ConfigError(f"dataset.format must be jsonl or xyz_dir, got {fmt!r}")
        fractions = _require(ds, "split_fractions", list, "dataset")
        if len(fractions) != 3:
            raise ConfigError("dataset.split_fractions needs 3 entries")
        if any(not isinstance(f, (int, float)) or f <= 0 for f in fractions):
            raise ConfigError("split fractions must be positive numbers")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigError(
                f"split fractions must sum to 1, got {sum(fractions)!r}"
            )

        lm = doc["lm"]
        for key in ("n_layers", "hidden_dim", "n_heads", "max_seq_len",
                    "epochs", "batch_size", "prompt_tokens"):
            _require(lm, key, int, "lm")
        for key in ("dropout_rate", "lr", "weight_decay", "grad_clip"):
            _require(lm, key, float, "lm")

        br = doc["bridge"]
        for key in ("n_layers", "hidden_dim", "n_heads", "ffn_dim",
                    "n_queries", "cond_dim"):
            _require(br, key, int, "bridge")

        df = doc["diffusion"]
        missing = [k for k in TABLE_KEYS if k not in df]
        if missing:
            raise ConfigError(f"diffusion: missing table keys {missing}")
        if df["optimizer"] != "AdamW":
            raise ConfigError(f"diffusion optimizer must be AdamW, got {df['optimizer']!r}")
        if df["total params"] is not None:
            _require(df, "total params", int, "diffusion")
        for key in ("n layers", "atom hidden size", "atom intermediate size",
                    "pair hidden size", "pair intermediate size", "n heads",
                    "warmup steps", "total_steps_T", "epochs", "batch_size",
                    "n_rbf"):
            _require(df, key, int, "diffusion")
        for key in ("init lr", "min lr", "warmup lr", "weight decay",
                    "grad_clip", "fixed_lr", "dropout", "r_max"):
            _require(df, key, float, "diffusion")
        if _require(df, "schedule", str, "diffusion") not in ("cosine", "linear"):
            raise ConfigError(f"diffusion.schedule must be cosine or linear")
        _require(df, "rotation_augment", bool, "diffusion")
        _require(df, "use_lr_schedule", bool, "diffusion")

        sp = doc["sampling"]
        for key in ("beam_size", "max_len", "steps"):
            _require(sp, key, int, "sampling")
        if _require(sp, "temperature", float, "sampling") <= 0:
            raise ConfigError("sampling.temperature must be > 0")

        ab = doc["ablation"]
        _require(ab, "zero_bridge", bool, "ablation")
        _require(ab, "finetune_lm", bool, "ablation")

        prop = doc["conditional"].get("property")
        if prop is not None and not isinstance(prop, str):
            raise ConfigError(f"conditional.property must be a string or null")

    # -- accessors ---------------------------------------------------------------

    @property
    def seed(self) -> int:
        return self.doc["seed"]

    @property
    def workers(self) -> int:
        return self.doc["workers"]

    @property
    def conditional_property(self) -> str | None:
        return self.doc["conditional"]["property"]

    @property
    def zero_bridge(self) -> bool:
        return self.doc["ablation"]["zero_bridge"]

    @property
    def finetune_lm(self) -> bool:
        return self.doc["ablation"]["finetune_lm"]

    @property
    def split_fractions(self) -> tuple[float, float, float]:
        return tuple(float(f) for f in self.doc["dataset"]["split_fractions"])

    @property
    def dataset_format(self) -> str:
        return self.doc["dataset"]["format"]

    def dataset_path(self) -> Path:
        raw = Path(self.doc["dataset"]["path"])
        if raw.is_absolute():
            return raw
        root = os.environ.get(DATA_ROOT_ENV)
        if root:
            return Path(root) / raw
        return self.base_dir / raw

    def hash(self) -> str:
        return config_hash(self.doc)

    # -- typed sub-configs ---------------------------------------------------------

    def lm_config(self, vocab_size: int) -> LmConfig:
        lm = self.doc["lm"]
        return LmConfig(
            vocab_size=vocab_size,
            n_layers=lm["n_layers"],
            hidden_dim=lm["hidden_dim"],
            n_heads=lm["n_heads"],
            max_seq_len=lm["max_seq_len"],
            dropout_rate=lm["dropout_rate"],
        )

    def projector_config(self) -> ProjectorConfig:
        br = self.doc["bridge"]
        return ProjectorConfig(
            n_layers=br["n_layers"],
            hidden_dim=br["hidden_dim"],
            n_heads=br["n_heads"],
            ffn_dim=br["ffn_dim"],
            n_queries=br["n_queries"],
            cond_dim=br["cond_dim"],
        )

    def denoiser_config(self) -> DenoiserConfig:
        df = self.doc["diffusion"]
        return DenoiserConfig(
            n_layers=df["n layers"],
            atom_hidden=df["atom hidden size"],
            atom_intermediate=df["atom intermediate size"],
            pair_hidden=df["pair hidden size"],
            pair_intermediate=df["pair intermediate size"],
            n_heads=df["n heads"],
            cond_dim=self.doc["bridge"]["cond_dim"],
            dropout=df["dropout"],
            n_rbf=df["n_rbf"],
            r_max=df["r_max"],
        )

    def diffusion_train_config(self) -> DiffusionTrainConfig:
        df = self.doc["diffusion"]
        return DiffusionTrainConfig(
            epochs=df["epochs"],
            batch_size=df["batch_size"],
            schedule_kind=df["schedule"],
            total_steps_T=df["total_steps_T"],
            init_lr=df["init lr"],
            min_lr=df["min lr"],
            warmup_lr=df["warmup lr"],
            warmup_steps=df["warmup steps"],
            weight_decay=df["weight decay"],
            grad_clip=df["grad_clip"],
            rotation_augment=df["rotation_augment"],
            zero_bridge=self.zero_bridge,
            finetune_lm=self.finetune_lm,
            use_lr_schedule=df["use_lr_schedule"],
            fixed_lr=df["fixed_lr"],
        )
