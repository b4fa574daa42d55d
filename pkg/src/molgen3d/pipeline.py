"""Operational surface: ingest, two-stage training, sampling, evaluation.

Every artifact embeds the run's (config hash, seed) pair; reports and
histogram CSVs are byte-identical across reruns of the same pair. Record
validation failures carry line numbers; more than 1% rejects aborts the
ingest. Per-molecule work (string sampling, conformer reversal, geometry
measurement) fans out over a bounded thread pool, results collected in
index order so parallelism never changes output; all writes happen on
the orchestrating thread.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bridge import (
    ConditionBridge,
    PropertyEmbedding,
    TimestepEmbedding,
    fuse_condition,
)
from .chem.graph import GeometricGraph
from .chem.hashing import canonical_hash
from .config import RunConfig
from .data import (
    DatasetRecord,
    read_jsonl,
    read_xyz_dir,
    record_from_geometric,
    split_indices,
    write_jsonl,
)
from .diffusion import (
    Denoiser,
    TrainingPair,
    build_schedule,
    sample_conformer,
    train_diffusion,
)
from .lm import (
    LanguageModel,
    PropertyPromptNet,
    SequenceTooLongError,
    make_soft_prompt,
    perplexity,
    sample_sequences,
    train_lm,
)
from .metrics import MetricReport, eval_2d, eval_3d, export_histograms, pool_measurements, snn
from .nn.checkpoint import checkpoint_byte_hash, load_checkpoint, save_checkpoint
from .nn.rng import RngStream
from .nn.tensor import no_grad
from .properties import (
    SURROGATE_ORACLES,
    is_surrogate,
    normalizer_stats,
    property_mae,
    resolve_property,
)
from .selfies import EncodeError, TokenError, decode, default_vocabulary, encode, tokenize

MAX_REJECT_FRACTION = 0.01
HISTOGRAM_BINS = 50


class PipelineError(Exception):
    exit_code = 1


class ValidationFailure(PipelineError):
    exit_code = 2


class MissingPrerequisite(PipelineError):
    exit_code = 3


# -- workdir layout ---------------------------------------------------------------


@dataclass
class Workdir:
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    @property
    def records_path(self) -> Path:
        return self.root / "dataset" / "records.jsonl"

    @property
    def splits_path(self) -> Path:
        return self.root / "dataset" / "splits.json"

    @property
    def hashes_path(self) -> Path:
        return self.root / "dataset" / "reference_hashes.json"

    def checkpoint(self, name: str) -> Path:
        return self.root / "checkpoints" / name

    @property
    def stage1_log(self) -> Path:
        return self.root / "logs" / "stage1.jsonl"

    @property
    def stage2_log(self) -> Path:
        return self.root / "logs" / "stage2.jsonl"

    @property
    def generated_path(self) -> Path:
        return self.root / "generated" / "samples.jsonl"

    @property
    def report_path(self) -> Path:
        return self.root / "reports" / "report.json"

    @property
    def histograms_dir(self) -> Path:
        return self.root / "reports" / "histograms"

    @property
    def figures_dir(self) -> Path:
        return self.root / "reports" / "figures"

    @property
    def property_mae_path(self) -> Path:
        return self.root / "reports" / "property_mae.json"


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    return value


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n")


class _JsonlLog:
    """Single-writer JSON-lines log; no wall-clock fields, so reruns match."""

    def __init__(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(path, "w")

    def write(self, **fields) -> None:
        self._fh.write(json.dumps(_jsonable(fields), sort_keys=True) + "\n")

    def close(self) -> None:
        self._fh.close()


# -- ingest -----------------------------------------------------------------------


@dataclass
class IngestSummary:
    n_accepted: int
    n_rejected: int
    split_counts: dict
    rejects: list


def _validate_record(rec: DatasetRecord) -> str | None:
    """None when the record is usable; otherwise the rejection reason.

    Fills in the canonical token string when the record lacks one.
    """
    graph = rec.graph2d()
    if rec.selfies is None:
        try:
            rec.selfies = encode(graph).raw
        except EncodeError as exc:
            return f"graph not encodable: {exc}"
        return None
    try:
        decoded = decode(tokenize(rec.selfies))
    except TokenError as exc:
        return f"selfies does not tokenize: {exc}"
    if canonical_hash(decoded) != canonical_hash(graph):
        return "selfies decodes to a graph not isomorphic to the stored atoms/bonds"
    return None


def ingest(
    config: RunConfig, workdir: Workdir, dataset_path: str | Path | None = None
) -> IngestSummary:
    path = Path(dataset_path) if dataset_path is not None else config.dataset_path()
    if not path.exists():
        raise MissingPrerequisite(f"dataset not found: {path}")
    if config.dataset_format == "jsonl":
        records, rejects, _ = read_jsonl(path)
    else:
        records, rejects, _ = read_xyz_dir(path)
    rejects = list(rejects)
    n_parsed_attempts = len(records) + len(rejects)
    accepted: list[DatasetRecord] = []
    for rec in records:
        reason = _validate_record(rec)
        if reason is None:
            accepted.append(rec)
        else:
            rejects.append((rec.source_line or 0, reason))
    if n_parsed_attempts == 0:
        raise ValidationFailure(f"no records found in {path}")
    if rejects:
        rejects.sort(key=lambda r: r[0])
        if len(rejects) > MAX_REJECT_FRACTION * n_parsed_attempts:
            listing = "; ".join(f"line {n}: {why}" for n, why in rejects[:20])
            raise ValidationFailure(
                f"ingest aborted: {len(rejects)}/{n_parsed_attempts} records "
                f"rejected (> {MAX_REJECT_FRACTION:.0%}): {listing}"
            )
    splits = split_indices(len(accepted), config.split_fractions, config.seed)
    meta = {
        "config_hash": config.hash(),
        "seed": config.seed,
        "kind": "dataset",
        "source": path.name,
        "n_records": len(accepted),
    }
    write_jsonl(workdir.records_path, accepted, meta=meta)
    _write_json(
        workdir.splits_path,
        {
            "config_hash": config.hash(),
            "seed": config.seed,
            "counts": {k: len(v) for k, v in splits.items()},
            **splits,
        },
    )
    train_hashes = sorted(
        {canonical_hash(accepted[i].graph2d()) for i in splits["train"]}
    )
    _write_json(
        workdir.hashes_path,
        {
            "config_hash": config.hash(),
            "seed": config.seed,
            "split": "train",
            "hashes": train_hashes,
        },
    )
    return IngestSummary(
        n_accepted=len(accepted),
        n_rejected=len(rejects),
        split_counts={k: len(v) for k, v in splits.items()},
        rejects=rejects,
    )


def _load_dataset(workdir: Workdir) -> tuple[list[DatasetRecord], dict]:
    if not workdir.records_path.exists() or not workdir.splits_path.exists():
        raise MissingPrerequisite(
            f"no ingested dataset under {workdir.root}; run ingest first"
        )
    records, rejects, _ = read_jsonl(workdir.records_path)
    if rejects:
        raise PipelineError(f"ingested dataset is corrupt: {rejects[:3]}")
    splits = json.loads(workdir.splits_path.read_text())
    return records, splits


# -- stage 1 ------------------------------------------------------------------------


def run_stage1(config: RunConfig, workdir: Workdir) -> dict:
    records, splits = _load_dataset(workdir)
    train_records = [records[i] for i in splits["train"]]
    val_records = [records[i] for i in splits["val"]]
    vocab = default_vocabulary()
    lm_cfg = config.lm_config(len(vocab))
    lm_doc = config.doc["lm"]

    corpus = [tokenize(rec.selfies) for rec in train_records]
    prop_name = config.conditional_property
    properties = None
    prompt_net = None
    normalizer = None
    rng = RngStream(config.seed).substream("stage1")
    if prop_name is not None:
        try:
            properties = [
                resolve_property(prop_name, rec.graph2d(), rec.properties)
                for rec in train_records
            ]
        except KeyError as exc:
            raise ValidationFailure(str(exc))
        normalizer = normalizer_stats(properties)
        if normalizer[1] <= 0:
            raise ValidationFailure(
                f"property {prop_name!r} has zero variance on the training "
                "split; cannot z-score"
            )
        prompt_net = PropertyPromptNet(
            lm_cfg.hidden_dim, k=lm_doc["prompt_tokens"], rng=rng.substream("prompt")
        )

    model = LanguageModel(lm_cfg, rng.substream("init"), vocab)
    log = _JsonlLog(workdir.stage1_log)
    log.write(event="start", stage="stage1", config_hash=config.hash(),
              seed=config.seed, n_train=len(corpus), n_parameters=model.n_parameters(),
              conditional=prop_name)
    try:
        result = train_lm(
            corpus,
            lm_cfg,
            epochs=lm_doc["epochs"],
            batch_size=lm_doc["batch_size"],
            rng=rng.substream("train"),
            lr=lm_doc["lr"],
            weight_decay=lm_doc["weight_decay"],
            grad_clip=lm_doc["grad_clip"],
            vocab=vocab,
            model=model,
            properties=properties,
            prompt_net=prompt_net,
            normalizer=normalizer,
            on_step=lambda step, loss, lr: log.write(step=step, loss=loss, lr=lr),
        )
    except SequenceTooLongError as exc:
        log.close()
        raise ValidationFailure(f"corpus does not fit the model: {exc}")
    for epoch, ppl in enumerate(result.epoch_perplexities, start=1):
        log.write(epoch=epoch, perplexity=ppl)
    val_ppl = perplexity(model, [tokenize(r.selfies) for r in val_records]) \
        if val_records else None
    log.write(event="done", final_loss=result.final_loss, val_perplexity=val_ppl)
    log.close()

    conditional_extra = None
    if prop_name is not None:
        conditional_extra = {
            "property": prop_name,
            "normalizer": [normalizer[0], normalizer[1]],
            "prompt_tokens": lm_doc["prompt_tokens"],
        }
    extra = {
        "config_hash": config.hash(),
        "seed": config.seed,
        "stage": "stage1",
        "lm": {
            "n_layers": lm_cfg.n_layers,
            "hidden_dim": lm_cfg.hidden_dim,
            "n_heads": lm_cfg.n_heads,
            "max_seq_len": lm_cfg.max_seq_len,
            "dropout_rate": lm_cfg.dropout_rate,
        },
        "vocab_size": len(vocab),
        "n_parameters": model.n_parameters(),
        "final_loss": result.final_loss,
        "val_perplexity": val_ppl,
        "conditional": conditional_extra,
    }
    save_checkpoint(workdir.checkpoint("lm"), model.state_dict(), extra=extra)
    if prompt_net is not None:
        save_checkpoint(
            workdir.checkpoint("prompt_net"),
            prompt_net.state_dict(),
            extra={"config_hash": config.hash(), "seed": config.seed,
                   "conditional": conditional_extra},
        )
    return {
        "checkpoint": str(workdir.checkpoint("lm")),
        "final_loss": result.final_loss,
        "epoch_perplexities": result.epoch_perplexities,
        "val_perplexity": val_ppl,
        "n_train": len(corpus),
    }


def _load_lm(workdir: Workdir, name: str = "lm") -> tuple[LanguageModel, dict]:
    prefix = workdir.checkpoint(name)
    if not Path(str(prefix) + ".manifest.json").exists():
        raise MissingPrerequisite(
            f"no language-model checkpoint at {prefix}; run train-lm first"
        )
    tensors, extra = load_checkpoint(prefix)
    vocab = default_vocabulary()
    if extra.get("vocab_size") != len(vocab):
        raise ValidationFailure(
            f"checkpoint vocab size {extra.get('vocab_size')} != current "
            f"vocabulary {len(vocab)}"
        )
    from .lm import LmConfig

    lm_cfg = LmConfig(vocab_size=len(vocab), **extra["lm"])
    model = LanguageModel(lm_cfg, RngStream(0).substream("rebuild"), vocab)
    model.load_state_dict(tensors)
    return model, extra


def _load_prompt_net(workdir: Workdir, lm_extra: dict) -> PropertyPromptNet:
    cond = lm_extra.get("conditional")
    if not cond:
        raise ValidationFailure(
            "stage-1 checkpoint was trained unconditionally; cannot condition"
        )
    prefix = workdir.checkpoint("prompt_net")
    if not Path(str(prefix) + ".manifest.json").exists():
        raise MissingPrerequisite(f"no prompt-net checkpoint at {prefix}")
    tensors, _ = load_checkpoint(prefix)
    net = PropertyPromptNet(
        lm_extra["lm"]["hidden_dim"], k=cond["prompt_tokens"],
        rng=RngStream(0).substream("rebuild"),
    )
    net.load_state_dict(tensors)
    return net


# -- stage 2 ------------------------------------------------------------------------


def _training_pairs(
    records: list[DatasetRecord], prop_name: str | None
) -> list[TrainingPair]:
    pairs = []
    for rec in records:
        graph = rec.graph2d()
        value = None
        if prop_name is not None:
            value = resolve_property(prop_name, graph, rec.properties)
        pairs.append(
            TrainingPair(
                stream=tokenize(rec.selfies),
                geom=rec.geometric(),
                property_value=value,
            )
        )
    return pairs


def run_stage2(config: RunConfig, workdir: Workdir) -> dict:
    records, splits = _load_dataset(workdir)
    model, lm_extra = _load_lm(workdir, "lm")
    lm_prefix = workdir.checkpoint("lm")
    lm_hash_before = checkpoint_byte_hash(lm_prefix)

    prop_name = config.conditional_property
    normalizer = None
    prop_embed = None
    rng = RngStream(config.seed).substream("stage2")
    if prop_name is not None:
        cond = lm_extra.get("conditional")
        if not cond or cond["property"] != prop_name:
            raise ValidationFailure(
                f"stage-1 checkpoint is not conditioned on {prop_name!r}; "
                "re-run train-lm with this config"
            )
        normalizer = tuple(cond["normalizer"])
        prop_embed = PropertyEmbedding(
            config.doc["bridge"]["cond_dim"], rng.substream("prop")
        )

    try:
        train_pairs = _training_pairs(
            [records[i] for i in splits["train"]], prop_name
        )
        val_pairs = _training_pairs([records[i] for i in splits["val"]], prop_name)
    except KeyError as exc:
        raise ValidationFailure(str(exc))

    bridge = ConditionBridge(
        config.projector_config(),
        lm_hidden_dim=lm_extra["lm"]["hidden_dim"],
        rng=rng.substream("bridge"),
    )
    denoiser_cfg = config.denoiser_config()
    denoiser = Denoiser(denoiser_cfg, rng.substream("denoiser"))
    time_embed = TimestepEmbedding(denoiser_cfg.cond_dim, rng.substream("time"))
    train_cfg = config.diffusion_train_config()

    log = _JsonlLog(workdir.stage2_log)
    log.write(event="start", stage="stage2", config_hash=config.hash(),
              seed=config.seed, n_train=len(train_pairs), n_val=len(val_pairs),
              zero_bridge=train_cfg.zero_bridge, finetune_lm=train_cfg.finetune_lm,
              conditional=prop_name)

    def on_epoch(msg: str) -> None:
        log.write(event="epoch", message=msg)

    result = train_diffusion(
        train_pairs,
        bridge,
        model,
        denoiser_cfg,
        train_cfg,
        rng.substream("train"),
        denoiser=denoiser,
        time_embed=time_embed,
        prop_embed=prop_embed,
        normalizer=normalizer,
        val_pairs=val_pairs or None,
        val_seed=config.seed,
        on_step=lambda step, loss, lr: log.write(step=step, loss=loss, lr=lr),
        log=on_epoch,
    )
    log.write(event="done",
              final_train_loss=result.epoch_losses[-1] if result.epoch_losses else None,
              final_val_loss=result.val_losses[-1] if result.val_losses else None)
    log.close()

    stage2_modules = {
        "bridge": bridge,
        "denoiser": denoiser,
        "time_embed": time_embed,
    }
    if prop_embed is not None:
        stage2_modules["prop_embed"] = prop_embed
    total_params = sum(m.n_parameters() for m in stage2_modules.values())
    if train_cfg.finetune_lm:
        lm_name = "lm_finetuned"
        save_checkpoint(workdir.checkpoint(lm_name), model.state_dict(),
                        extra={**lm_extra, "stage": "stage2-finetuned",
                               "config_hash": config.hash(), "seed": config.seed})
    else:
        # Frozen contract: re-serializing the in-memory model must
        # reproduce the stage-1 bytes exactly.
        save_checkpoint(lm_prefix, model.state_dict(), extra=lm_extra)
        lm_hash_after = checkpoint_byte_hash(lm_prefix)
        if lm_hash_after != lm_hash_before:
            raise PipelineError(
                "frozen-LM contract violated: stage-2 training moved the "
                f"language model ({lm_hash_before[:12]} -> {lm_hash_after[:12]})"
            )
        lm_name = "lm"

    extra = {
        "config_hash": config.hash(),
        "seed": config.seed,
        "stage": "stage2",
        "schedule": train_cfg.schedule_kind,
        "total_steps_T": train_cfg.total_steps_T,
        "training_steps": denoiser.training_steps,
        "total params": total_params,
        "ablation": {"zero_bridge": train_cfg.zero_bridge,
                     "finetune_lm": train_cfg.finetune_lm},
        "lm_checkpoint": lm_name,
        "lm_hash": checkpoint_byte_hash(workdir.checkpoint(lm_name)),
        "epoch_losses": result.epoch_losses,
        "val_losses": result.val_losses,
        "conditional": lm_extra.get("conditional") if prop_name is not None else None,
    }
    for name, module in stage2_modules.items():
        save_checkpoint(workdir.checkpoint(name), module.state_dict(), extra=extra)
    return {
        "checkpoints": {n: str(workdir.checkpoint(n)) for n in stage2_modules},
        "lm_checkpoint": lm_name,
        "epoch_losses": result.epoch_losses,
        "val_losses": result.val_losses,
        "total_params": total_params,
    }


def _load_ckpt(prefix: Path) -> tuple[dict, dict]:
    try:
        return load_checkpoint(prefix)
    except FileNotFoundError:
        raise MissingPrerequisite(f"missing checkpoint {prefix}; train first")


def _load_stage2(workdir: Workdir, config: RunConfig):
    den_tensors, extra = _load_ckpt(workdir.checkpoint("denoiser"))
    recorded = extra.get("ablation", {})
    if recorded.get("zero_bridge") != config.zero_bridge or \
            recorded.get("finetune_lm") != config.finetune_lm:
        raise ValidationFailure(
            f"config ablation flags {config.doc['ablation']} do not match the "
            f"stage-2 checkpoint ({recorded}); artifacts are from another run"
        )
    if extra.get("schedule") != config.doc["diffusion"]["schedule"] or \
            extra.get("total_steps_T") != config.doc["diffusion"]["total_steps_T"]:
        raise ValidationFailure(
            "config noise schedule does not match the stage-2 checkpoint"
        )
    denoiser = Denoiser(config.denoiser_config(), RngStream(0).substream("rebuild"))
    denoiser.load_state_dict(den_tensors)
    denoiser.training_steps = int(extra.get("training_steps", 1))
    bridge = ConditionBridge(
        config.projector_config(),
        lm_hidden_dim=_load_ckpt(workdir.checkpoint("lm"))[1]["lm"]["hidden_dim"],
        rng=RngStream(0).substream("rebuild"),
    )
    bridge.load_state_dict(_load_ckpt(workdir.checkpoint("bridge"))[0])
    time_embed = TimestepEmbedding(
        config.denoiser_config().cond_dim, RngStream(0).substream("rebuild")
    )
    time_embed.load_state_dict(_load_ckpt(workdir.checkpoint("time_embed"))[0])
    prop_embed = None
    if extra.get("conditional"):
        prop_embed = PropertyEmbedding(
            config.doc["bridge"]["cond_dim"], RngStream(0).substream("rebuild")
        )
        prop_embed.load_state_dict(_load_ckpt(workdir.checkpoint("prop_embed"))[0])
    return denoiser, bridge, time_embed, prop_embed, extra


# -- generation ----------------------------------------------------------------------


def run_generate(
    config: RunConfig,
    workdir: Workdir,
    n: int,
    target: float | None = None,
    out_path: str | Path | None = None,
) -> Path:
    if n <= 0:
        raise ValidationFailure(f"nothing to generate (n={n})")
    denoiser, bridge, time_embed, prop_embed, stage2_extra = _load_stage2(workdir, config)
    model, lm_extra = _load_lm(workdir, stage2_extra["lm_checkpoint"])

    prop_name = config.conditional_property
    soft_prompt = None
    prop_row = None
    normalizer = None
    if prop_name is not None:
        if target is None:
            raise ValidationFailure(
                f"conditional run (property {prop_name!r}) needs a target value"
            )
        cond_meta = (stage2_extra.get("conditional") or
                     lm_extra.get("conditional") or {})
        if cond_meta.get("property") != prop_name:
            raise ValidationFailure(
                f"checkpoints are not conditioned on {prop_name!r}"
            )
        normalizer = tuple(cond_meta["normalizer"])
        if normalizer[1] <= 0:
            raise ValidationFailure(
                f"normalizer std for {prop_name!r} is {normalizer[1]}; "
                "cannot z-score the target"
            )
        prompt_net = _load_prompt_net(workdir, lm_extra)
        if prop_embed is None:
            raise MissingPrerequisite(
                "stage-2 checkpoints lack the property embedding; re-run "
                "train-diffusion with this config"
            )
        with no_grad():
            soft_prompt = make_soft_prompt(prompt_net, float(target), normalizer)
            prop_row = prop_embed(np.asarray([float(target)]), normalizer)
    elif target is not None:
        raise ValidationFailure(
            "config has no conditional property; drop the target value"
        )

    sampling = config.doc["sampling"]
    schedule = build_schedule(
        config.doc["diffusion"]["schedule"], config.doc["diffusion"]["total_steps_T"]
    )
    rng = RngStream(config.seed).substream("generate")
    zero_bridge = config.zero_bridge

    beam_streams = None
    if sampling["beam_size"] > 1:
        beam_streams = sample_sequences(
            model,
            n,
            temperature=sampling["temperature"],
            beam_size=sampling["beam_size"],
            max_len=sampling["max_len"],
            soft_prompt=soft_prompt,
        )

    def one(i: int):
        if beam_streams is not None:
            stream = beam_streams[i]
        else:
            stream = sample_sequences(
                model,
                1,
                temperature=sampling["temperature"],
                beam_size=1,
                max_len=sampling["max_len"],
                soft_prompt=soft_prompt,
                rng=rng.substream(f"seq{i}"),
            )[0]
        graph = decode(stream)
        if zero_bridge:
            c_chem = None
        else:
            states = model.hidden_states(stream)
            c_chem = bridge(states)

        def cond_fn(t: int):
            return fuse_condition(
                c_chem, time_embed(np.asarray([t]), schedule.T), prop_row
            )

        conformer, _ = sample_conformer(
            denoiser, schedule, graph, cond_fn, rng.substream(f"conf{i}"),
            steps=sampling["steps"],
        )
        props = {name: fn(graph) for name, fn in SURROGATE_ORACLES.items()}
        return record_from_geometric(
            GeometricGraph(graph, conformer), selfies=stream.raw, properties=props
        )

    with no_grad():
        if config.workers > 1 and n > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                made = list(pool.map(one, range(n)))
        else:
            made = [one(i) for i in range(n)]

    meta = {
        "config_hash": config.hash(),
        "seed": config.seed,
        "kind": "generated",
        "n": n,
        "conditional": (
            {"property": prop_name, "target": float(target)}
            if prop_name is not None else None
        ),
        "sampling": {
            "temperature": sampling["temperature"],
            "beam_size": sampling["beam_size"],
            "steps": sampling["steps"],
            "zero_bridge": zero_bridge,
        },
    }
    out = Path(out_path) if out_path is not None else workdir.generated_path
    write_jsonl(out, made, meta=meta)
    return out


# -- evaluation ----------------------------------------------------------------------


def _read_generated(path: Path) -> tuple[list[DatasetRecord], dict]:
    if not path.exists():
        raise MissingPrerequisite(f"no generated file at {path}; run generate first")
    records, rejects, meta = read_jsonl(path)
    if rejects:
        listing = "; ".join(f"line {n}: {why}" for n, why in rejects[:5])
        raise ValidationFailure(f"generated file has malformed records: {listing}")
    if not records:
        raise ValidationFailure(f"generated set is empty: {path}")
    return records, meta


def run_evaluate(
    config: RunConfig,
    workdir: Workdir,
    generated_path: str | Path | None = None,
    split: str = "test",
) -> dict:
    gen_path = Path(generated_path) if generated_path is not None \
        else workdir.generated_path
    gen_records, gen_meta = _read_generated(gen_path)
    records, splits = _load_dataset(workdir)
    if split not in ("train", "val", "test"):
        raise ValidationFailure(f"unknown reference split {split!r}")
    ref_records = [records[i] for i in splits[split]]
    if not ref_records:
        raise ValidationFailure(f"reference split {split!r} is empty")
    if not workdir.hashes_path.exists():
        raise MissingPrerequisite(f"no reference hashes at {workdir.hashes_path}")
    novelty_hashes = set(json.loads(workdir.hashes_path.read_text())["hashes"])

    gen_graphs = [r.graph2d() for r in gen_records]
    ref_graphs = [r.graph2d() for r in ref_records]
    gen_geoms = [r.geometric() for r in gen_records]
    ref_geoms = [r.geometric() for r in ref_records]

    report2d = eval_2d(gen_graphs, novelty_hashes)
    snn_score = snn(gen_graphs, ref_graphs)
    report3d = eval_3d(gen_geoms, ref_geoms, workers=config.workers)

    gen_pools = pool_measurements(gen_geoms, workers=config.workers)
    ref_pools = pool_measurements(ref_geoms, workers=config.workers)
    rows_by_family: dict[str, list[dict]] = {}
    notes: list[str] = []
    csv_files: list[str] = []
    workdir.histograms_dir.mkdir(parents=True, exist_ok=True)
    for family in ("bond_lengths", "bond_angles", "dihedral_angles"):
        keys = sorted(set(gen_pools[family]) | set(ref_pools[family]))
        sets = {
            k: (gen_pools[family].get(k, []), ref_pools[family].get(k, []))
            for k in keys
        }
        rows, family_notes = export_histograms(sets, bins=HISTOGRAM_BINS)
        rows_by_family[family] = rows
        notes.extend(f"{family}/{n}" for n in family_notes)
        csv_path = workdir.histograms_dir / f"{family}.csv"
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh,
                fieldnames=["type_key", "bin_lo", "bin_hi", "gen_density", "ref_density"],
            )
            writer.writeheader()
            for row in rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v
                                 for k, v in row.items()})
        csv_files.append(csv_path.name)

    from .plots import render_all_histogram_figures

    figure_paths = render_all_histogram_figures(rows_by_family, workdir.figures_dir)

    merged = MetricReport(
        counts=dict(report2d.counts),
        scores={**report2d.scores, "snn": snn_score},
        geometry=dict(report3d.geometry),
        metadata={
            "n_reference": len(ref_records),
            "reference_split": split,
            "histogram_bins": HISTOGRAM_BINS,
            "histogram_notes": sorted(notes),
            "histogram_files": csv_files,
            "figure_files": [p.name for p in figure_paths],
            "generated_file": gen_path.name,
            "generated_meta": gen_meta or None,
        },
    )
    try:
        merged.validate()
    except ValueError as exc:
        raise ValidationFailure(f"metric invariant violated: {exc}")

    report = {
        "config_hash": config.hash(),
        "seed": config.seed,
        **merged.as_dict(),
    }
    _validate_report_schema(report)
    _write_json(workdir.report_path, report)
    return report


def _validate_report_schema(report: dict) -> None:
    import importlib.resources as resources

    import jsonschema

    schema_text = (
        resources.files("molgen3d") / "resources" / "metric_report.schema.json"
    ).read_text()
    try:
        jsonschema.validate(_jsonable(report), json.loads(schema_text))
    except jsonschema.ValidationError as exc:
        raise ValidationFailure(f"report does not match the shipped schema: {exc.message}")


# -- property MAE ----------------------------------------------------------------------


def run_property_mae(
    config: RunConfig,
    workdir: Workdir,
    generated_path: str | Path | None = None,
    property_name: str | None = None,
    targets=None,
    oracle=None,
) -> dict:
    gen_path = Path(generated_path) if generated_path is not None \
        else workdir.generated_path
    gen_records, gen_meta = _read_generated(gen_path)
    cond_meta = (gen_meta or {}).get("conditional") or {}

    name = property_name or config.conditional_property or cond_meta.get("property")
    if oracle is None:
        if name is None:
            raise ValidationFailure(
                "no property to score: pass one or condition the config"
            )
        if not is_surrogate(name):
            raise ValidationFailure(
                f"no oracle available for {name!r}; desk-scale scoring covers "
                f"{sorted(SURROGATE_ORACLES)}"
            )
        oracle = SURROGATE_ORACLES[name]
    if targets is None:
        targets = cond_meta.get("target")
    if targets is None:
        raise ValidationFailure("no target value(s): pass targets or generate "
                                "conditionally so the file records one")

    graphs = [r.graph2d() for r in gen_records]
    try:
        result = property_mae(graphs, oracle, targets)
    except ValueError as exc:
        raise ValidationFailure(str(exc))
    out = {
        "config_hash": config.hash(),
        "seed": config.seed,
        "property": name,
        "targets": _jsonable(targets),
        "generated_file": gen_path.name,
        **result,
    }
    _write_json(workdir.property_mae_path, out)
    return out
