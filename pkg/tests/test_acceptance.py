"""Acceptance gate: ten pinned end-to-end checks, one printed verdict each.

Run with plain pytest; each check prints its own PASS/FAIL line even under
output capture. The overfit benchmark (criteria 6, 9, 10 share one trained
pipeline) uses a fixed corpus of 16 small alkane trees so that bond and
angle pools concentrate into a few type keys with plenty of samples.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import fd_gradient, max_normalized_error, mmd_bruteforce

from molgen3d.bridge import (
    ConditionBridge,
    ProjectorConfig,
    TimestepEmbedding,
    fuse_condition,
)
from molgen3d.chem.elements import adjusted_valences
from molgen3d.chem.graph import (
    Atom,
    Bond,
    BondOrder,
    GeometricGraph,
    MolecularGraph2D,
)
from molgen3d.chem.hashing import canonical_hash
from molgen3d.config import RunConfig, default_document
from molgen3d.data import read_jsonl, write_jsonl
from molgen3d.diffusion import (
    Denoiser,
    DenoiserConfig,
    build_schedule,
    center_of_mass_project,
    diffusion_loss,
    forward_noise,
    pack_batch,
)
from molgen3d.lm import (
    LmConfig,
    PropertyPromptNet,
    make_soft_prompt,
    sample_sequences,
    train_lm,
)
from molgen3d.metrics import mmd
from molgen3d.nn import tensor as T
from molgen3d.nn.checkpoint import checkpoint_byte_hash
from molgen3d.nn.rng import RngStream
from molgen3d.nn.tensor import Tensor, precision
from molgen3d.pipeline import (
    Workdir,
    _load_lm,
    ingest,
    run_evaluate,
    run_generate,
    run_stage1,
    run_stage2,
)
from molgen3d.properties import SURROGATE_ORACLES
from molgen3d.selfies import decode, default_vocabulary, encode, tokenize
from molgen3d.toydata import layout_conformer, make_toy_corpus

# -- overfit benchmark knobs ------------------------------------------------------

BENCH_SEED = 7
BENCH_LM_EPOCHS = 300
BENCH_DIF_EPOCHS = 4000
BENCH_T = 400
BENCH_SAMPLE_STEPS = 400
BENCH_LAYERS = 3
BENCH_ATOM = 64
BENCH_PAIR = 32
BENCH_N_GEN = 48
COVERAGE_DRAWS = 160

ABLATION_SEEDS = (31, 32, 33)
ABLATION_DIF_EPOCHS = 600
ABLATION_T = 200

CONDITIONAL_SEEDS = (21, 22, 23)
CONDITIONAL_EPOCHS = 200
CONDITIONAL_TARGET = 4.0


def _verdict(capsys, num, ok, detail=""):
    tail = f"  ({detail})" if detail else ""
    with capsys.disabled():
        print(f"acceptance {num:02d}: {'PASS' if ok else 'FAIL'}{tail}", flush=True)
    assert ok, f"criterion {num}: {detail}"


# -- benchmark corpus -------------------------------------------------------------


def carbon_tree_records(n, seed):
    """n distinct alkane trees (2..9 carbons), spring-layout conformers."""
    from molgen3d.data import record_from_geometric

    rng = RngStream(seed)
    grow = rng.substream("grow")
    records, seen = [], set()
    size_cycle = list(range(2, 10))
    k = 0
    while len(records) < n:
        size = size_cycle[k % len(size_cycle)]
        k += 1
        parents = [None]
        degree = [0] * size
        for i in range(1, size):
            options = [j for j in range(i) if degree[j] < 4]
            j = options[int(grow.integers(0, len(options)))]
            parents.append(j)
            degree[i] += 1
            degree[j] += 1
        atoms = [Atom("C") for _ in range(size)]
        bonds = [Bond(i, parents[i], BondOrder.SINGLE) for i in range(1, size)]
        for i in range(size):
            for _ in range(4 - degree[i]):
                atoms.append(Atom("H"))
                bonds.append(Bond(i, len(atoms) - 1, BondOrder.SINGLE))
        graph = MolecularGraph2D(atoms, bonds)
        h = canonical_hash(graph)
        if h in seen:
            continue
        seen.add(h)
        stream = encode(graph)
        conf = layout_conformer(graph, rng.substream(f"layout{len(records)}"))
        geom = GeometricGraph(graph, conf)
        props = {name: fn(graph) for name, fn in SURROGATE_ORACLES.items()}
        records.append(
            record_from_geometric(geom, selfies=stream.raw, properties=props)
        )
    return records


def _overfit_doc(dataset_path, seed, dif_epochs, total_T, steps,
                 zero_bridge=False, fractions=(0.9, 0.05, 0.05)):
    doc = default_document()
    doc["seed"] = seed
    doc["workers"] = 4
    doc["dataset"]["path"] = str(dataset_path)
    doc["dataset"]["split_fractions"] = list(fractions)
    doc["lm"].update(n_layers=2, hidden_dim=64, n_heads=4, max_seq_len=48,
                     epochs=BENCH_LM_EPOCHS, batch_size=8, lr=1e-3)
    doc["bridge"].update(n_layers=2, hidden_dim=64, n_heads=4, ffn_dim=128,
                         n_queries=4, cond_dim=48)
    doc["diffusion"].update({
        "n layers": BENCH_LAYERS,
        "atom hidden size": BENCH_ATOM,
        "atom intermediate size": BENCH_ATOM * 2,
        "pair hidden size": BENCH_PAIR,
        "pair intermediate size": BENCH_PAIR * 2,
        "n heads": 4,
        "total_steps_T": total_T, "epochs": dif_epochs, "batch_size": 16,
        "use_lr_schedule": True, "init lr": 1e-3, "min lr": 1e-5,
        "warmup lr": 1e-6, "warmup steps": 100, "weight decay": 0.0,
        "n_rbf": 32, "r_max": 6.0,
    })
    doc["sampling"].update(max_len=32, steps=steps)
    doc["ablation"]["zero_bridge"] = bool(zero_bridge)
    return doc


@pytest.fixture(scope="module")
def overfit_run(tmp_path_factory):
    """One stage-1 + stage-2 pipeline on 16 alkanes, shared by 6, 9, 10."""
    root = tmp_path_factory.mktemp("bench")
    records = carbon_tree_records(18, seed=2024)
    data_path = root / "alkanes.jsonl"
    write_jsonl(data_path, records)
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(_overfit_doc(
        data_path, BENCH_SEED, BENCH_DIF_EPOCHS, BENCH_T, BENCH_SAMPLE_STEPS)))
    config = RunConfig.load(cfg_path)
    workdir = Workdir(root / "work")

    summary = ingest(config, workdir)
    assert summary.split_counts["train"] == 16

    t0 = time.perf_counter()
    run_stage1(config, workdir)
    lm_hash_before = checkpoint_byte_hash(workdir.checkpoint("lm"))
    run_stage2(config, workdir)
    train_seconds = time.perf_counter() - t0
    lm_hash_after = checkpoint_byte_hash(workdir.checkpoint("lm"))

    # ancestral coverage of the 16 training strings
    model, _ = _load_lm(workdir, "lm")
    recs, _, _ = read_jsonl(workdir.records_path)
    splits = json.loads(workdir.splits_path.read_text())
    train_raws = {recs[i].selfies for i in splits["train"]}
    draws = sample_sequences(model, COVERAGE_DRAWS, temperature=1.0,
                             rng=RngStream(999).substream("coverage"))
    covered = {s.raw for s in draws} & train_raws

    run_generate(config, workdir, BENCH_N_GEN)
    report_gen = run_evaluate(config, workdir, split="train")

    # train split re-emitted as a generated file: metric extremes
    self_path = root / "train_as_generated.jsonl"
    train_records = [recs[i] for i in splits["train"]]
    write_jsonl(self_path, train_records,
                meta={"kind": "generated", "n": len(train_records),
                      "config_hash": config.hash(), "seed": BENCH_SEED})
    report_self = run_evaluate(config, workdir, generated_path=self_path,
                               split="train")

    return dict(
        config=config, workdir=workdir, train_seconds=train_seconds,
        lm_hash_before=lm_hash_before, lm_hash_after=lm_hash_after,
        n_train=len(train_raws), n_covered=len(covered),
        report_gen=report_gen, report_self=report_self,
    )


# -- 1: decoder totality ----------------------------------------------------------


def _hydrogen_completed(graph):
    """Admissible valences, and no whole-hydrogen gap left unfilled.

    An atom may sit below an allowed valence only by a fractional residue
    (a lone aromatic half-bond), and then by strictly less than one unit.
    """
    sums = [0.0] * len(graph.atoms)
    for b in graph.bonds:
        sums[b.i] += b.order.value
        sums[b.j] += b.order.value
    for idx, atom in enumerate(graph.atoms):
        s = sums[idx]
        allowed = sorted(adjusted_valences(atom.symbol, atom.charge))
        if s > max(allowed):
            return False
        gaps = [v - s for v in allowed if v >= s]
        if any(g == 0.0 for g in gaps):
            continue
        if any(float(g).is_integer() for g in gaps):
            return False  # a whole hydrogen would have fit
        if max(allowed) - s >= 1.0:
            return False
    return True


def test_criterion_01_decoder_totality(capsys):
    vocab = default_vocabulary()
    special = {vocab.pad_id, vocab.bos_id, vocab.eos_id}
    drawable = np.array([i for i in range(len(vocab)) if i not in special])
    rng = np.random.default_rng(20240817)
    n = 100_000
    lengths = rng.integers(1, 21, size=n)
    table = rng.choice(drawable, size=(n, 20))
    t0 = time.perf_counter()
    for i in range(n):
        graph = decode(table[i, : lengths[i]].tolist(), vocab)
        assert _hydrogen_completed(graph), f"stream {i} under-filled"
    elapsed = time.perf_counter() - t0
    _verdict(capsys, 1, elapsed < 60.0,
             f"{n} streams decoded valence-complete in {elapsed:.1f}s")


# -- 2: round trip ----------------------------------------------------------------


def test_criterion_02_round_trip(capsys):
    records = make_toy_corpus(1000, seed=20240817)
    bad = 0
    for r in records:
        g = r.graph2d()
        if canonical_hash(decode(encode(g).vocab_ids)) != canonical_hash(g):
            bad += 1
    _verdict(capsys, 2, bad == 0, f"1000 records, {bad} hash mismatches")


# -- 3: finite differences --------------------------------------------------------


def _fd_max_err(build_loss, x0):
    with precision(np.float64):
        leaf = Tensor(np.array(x0, dtype=np.float64), requires_grad=True)
        build_loss(leaf).backward()
        fd = fd_gradient(lambda arr: build_loss(Tensor(arr)).item(), np.array(x0))
        return max_normalized_error(leaf.grad, fd)


def _per_op_cases():
    rng = np.random.default_rng(0)
    x34 = rng.normal(size=(3, 4))
    other = Tensor(rng.normal(size=(3, 4)))
    w = Tensor(rng.normal(size=(4, 2)))
    bias = Tensor(rng.normal(size=(2,)))
    wide = Tensor(rng.normal(size=(4, 3)))
    x234 = rng.normal(size=(2, 3, 4))
    mask46 = np.ones((4, 6), dtype=bool)
    mask46[1, 3:] = False
    mask46[2, :] = False
    mult46 = rng.normal(size=(4, 6))
    targets = rng.integers(0, 7, size=5)
    mse_target = rng.normal(size=(6, 3))
    mse_mask = np.array([1, 1, 0, 1, 0, 1], dtype=bool)[:, None]
    return [
        ("mul/div/sub/pow", x34,
         lambda x: ((x * other + x / 2.0 - other) ** 2.0).sum()),
        ("gelu", x34, lambda x: T.gelu(x).sum()),
        ("exp/log", x34, lambda x: (x.exp() + (x * x + 1.0).log()).sum()),
        ("matmul+bias", x34, lambda x: ((x @ w + bias) ** 2.0).sum()),
        ("broadcast add", rng.normal(size=(1, 3)),
         lambda x: ((x + wide) ** 2.0).sum()),
        ("sum/mean", x234, lambda x: x.sum(axis=1).mean()),
        ("reshape/transpose", x234,
         lambda x: x.reshape(6, 4).transpose((1, 0)).sum()),
        ("swapaxes/getitem", x234, lambda x: x.swapaxes(0, 2)[1].sum()),
        ("concat", x234, lambda x: T.concat([x, x * 2.0], axis=-1).sum()),
        ("layer_norm", rng.normal(size=(4, 6)),
         lambda x: (T.layer_norm(x) * Tensor(mult46)).sum()),
        ("masked softmax", rng.normal(size=(4, 6)),
         lambda x: (T.softmax(x, mask=mask46) ** 2.0).sum()),
        ("cross_entropy", rng.normal(size=(5, 7)),
         lambda x: T.cross_entropy(x, targets)),
        ("masked mse", rng.normal(size=(6, 3)),
         lambda x: T.mse(x, mse_target, mask=mse_mask)),
    ]


def test_criterion_03_finite_difference(capsys):
    t0 = time.perf_counter()
    worst_op = 0.0
    for name, x0, build in _per_op_cases():
        err = _fd_max_err(build, x0)
        assert err <= 1e-4, f"{name}: {err}"
        worst_op = max(worst_op, err)

    # embedding rows through a gather
    rng = np.random.default_rng(11)
    table0 = rng.normal(size=(5, 4))
    idx = np.array([0, 2, 2, 4])
    err = _fd_max_err(lambda x: (x[idx] ** 2.0).sum(), table0)
    assert err <= 1e-4, f"embedding gather: {err}"
    worst_op = max(worst_op, err)

    # full condition chain: states -> queries -> condition -> denoiser -> loss
    with precision(np.float64):
        rng = RngStream(77)
        lm_dim, cond_dim = 16, 16
        bridge = ConditionBridge(
            ProjectorConfig(n_layers=1, hidden_dim=24, n_heads=2, ffn_dim=48,
                            n_queries=2, cond_dim=cond_dim),
            lm_hidden_dim=lm_dim, rng=rng.substream("bridge"),
        )
        temb = TimestepEmbedding(cond_dim, rng.substream("time"))
        dcfg = DenoiserConfig(n_layers=1, atom_hidden=16, atom_intermediate=32,
                              pair_hidden=8, pair_intermediate=16, n_heads=2,
                              cond_dim=cond_dim, n_rbf=4, r_max=6.0)
        denoiser = Denoiser(dcfg, rng.substream("den"))
        jitter = rng.substream("jitter")
        for p in denoiser.parameters():
            p.data = p.data + jitter.normal(p.shape) * 0.05

        graph = decode(tokenize("[C][C][O]").vocab_ids)
        n_atoms = graph.n_atoms
        x_t = center_of_mass_project(
            np.asarray(rng.substream("xt").normal((n_atoms, 3)), dtype=np.float64))
        eps_target = center_of_mass_project(
            np.asarray(rng.substream("eps").normal((n_atoms, 3)), dtype=np.float64))
        atom_feat, pair_feat, mask = pack_batch([graph], [x_t], dcfg)
        schedule_T = 100

        def chain(states):
            c = bridge(states)
            fused = fuse_condition(c, temb(np.asarray([37]), schedule_T), None)
            eps_hat = denoiser(atom_feat, pair_feat, mask, fused)
            return diffusion_loss(eps_hat, eps_target[None, ...],
                                  mask=np.ones((1, n_atoms), dtype=bool))

        states0 = rng.substream("states").normal((3, lm_dim))
        leaf = Tensor(np.array(states0, dtype=np.float64), requires_grad=True)
        chain(leaf).backward()
        fd = fd_gradient(lambda arr: chain(Tensor(arr)).item(),
                         np.array(states0))
        chain_err = max_normalized_error(leaf.grad, fd)
        assert chain_err <= 1e-3, f"states grad: {chain_err}"

        # a handful of parameters along the same chain
        named = dict(bridge.named_parameters())
        picks = [next(n for n in named if "quer" in n)]
        picks.append(next(n for n in sorted(named)
                          if named[n].data.size <= 600 and "quer" not in n))
        for name in picks:
            p = named[name]
            x0 = p.data.copy()

            def with_param(arr, p=p):
                p.data = arr.reshape(p.shape).astype(p.data.dtype)
                return chain(Tensor(states0)).item()

            for q in bridge.parameters():
                q.zero_grad()
            chain(Tensor(states0, requires_grad=False)).backward()
            ad = p.grad.copy()
            fd = fd_gradient(with_param, x0.copy())
            p.data = x0
            err = max_normalized_error(ad, fd.reshape(ad.shape))
            assert err <= 1e-3, f"param {name}: {err}"
            chain_err = max(chain_err, err)

    elapsed = time.perf_counter() - t0
    _verdict(capsys, 3, elapsed < 300.0,
             f"op max err {worst_op:.2e}, chain max err {chain_err:.2e}, "
             f"{elapsed:.0f}s")


# -- 4: forward noising moments ---------------------------------------------------


def test_criterion_04_forward_noise_moments(capsys):
    schedule = build_schedule("cosine", 200)
    record = carbon_tree_records(1, seed=5)[0]
    x0 = center_of_mass_project(record.geometric().conformer.coordinates)
    rng = np.random.default_rng(20240817)
    n_draws = 100_000
    detail = []
    ok = True
    for t in (schedule.T // 10, schedule.T // 2, schedule.T):
        eps = rng.standard_normal((n_draws,) + x0.shape)
        x_t = forward_noise(x0, t, eps, schedule)
        ab = schedule.alpha_bar[t]
        dev = x_t - math.sqrt(ab) * x0
        m = dev.size
        mean_se = math.sqrt((1.0 - ab) / m)
        var_se = (1.0 - ab) * math.sqrt(2.0 / (m - 1))
        mean_err = abs(float(dev.mean()))
        var_err = abs(float(dev.var()) - (1.0 - ab))
        ok = ok and mean_err <= 3 * mean_se and var_err <= 3 * var_se
        detail.append(f"t={t}: |dm|={mean_err / mean_se:.2f}se "
                      f"|dv|={var_err / var_se:.2f}se")
    _verdict(capsys, 4, ok, "; ".join(detail))


# -- 5: kernel two-sample statistic ------------------------------------------------


def test_criterion_05_mmd_against_bruteforce(capsys):
    rng = np.random.default_rng(20240817)
    worst = 0.0
    worst_self = 0.0
    for k in range(20):
        loc_a, loc_b = rng.normal(size=2) * 3.0
        scale_a, scale_b = rng.uniform(0.05, 2.0, size=2)
        a = rng.normal(loc_a, scale_a, size=50)
        b = rng.normal(loc_b, scale_b, size=50)
        worst = max(worst, abs(mmd(a, b) - mmd_bruteforce(a, b)))
        worst_self = max(worst_self, mmd(a, a))
    ok = worst <= 1e-10 and worst_self <= 1e-12
    _verdict(capsys, 5, ok,
             f"max |fast-brute| {worst:.1e}, max self {worst_self:.1e}")


# -- 6: overfit benchmark ---------------------------------------------------------


def test_criterion_06_overfit_benchmark(capsys, overfit_run):
    r = overfit_run
    agg = r["report_gen"]["geometry"]["aggregate"]
    lengths, angles = agg["bond_lengths"], agg["bond_angles"]
    ok = (
        r["train_seconds"] <= 1800.0
        and r["n_covered"] >= 14
        and lengths is not None and lengths <= 0.05
        and angles is not None and angles <= 0.05
    )
    _verdict(capsys, 6, ok,
             f"train {r['train_seconds']:.0f}s, coverage "
             f"{r['n_covered']}/{r['n_train']}, length mmd "
             f"{lengths if lengths is None else round(lengths, 4)}, angle mmd "
             f"{angles if angles is None else round(angles, 4)}")


# -- 7: zero-bridge ablation -------------------------------------------------------


def test_criterion_07_bridge_ablation(capsys, tmp_path):
    records = carbon_tree_records(20, seed=2024)
    finals = {True: [], False: []}
    for seed in ABLATION_SEEDS:
        for zero_bridge in (True, False):
            base = tmp_path / f"s{seed}_{'zero' if zero_bridge else 'active'}"
            base.mkdir(parents=True)
            data_path = base / "alkanes.jsonl"
            write_jsonl(data_path, records)
            doc = _overfit_doc(data_path, seed, ABLATION_DIF_EPOCHS,
                               ABLATION_T, ABLATION_T, zero_bridge=zero_bridge,
                               fractions=(0.8, 0.1, 0.1))
            cfg_path = base / "config.json"
            cfg_path.write_text(json.dumps(doc))
            config = RunConfig.load(cfg_path)
            workdir = Workdir(base / "work")
            ingest(config, workdir)
            run_stage1(config, workdir)
            summary = run_stage2(config, workdir)
            finals[zero_bridge].append(summary["val_losses"][-1])
    mean_zero = float(np.mean(finals[True]))
    mean_active = float(np.mean(finals[False]))
    _verdict(capsys, 7, mean_zero >= mean_active,
             f"mean val loss zero {mean_zero:.4f} >= active {mean_active:.4f} "
             f"over {len(ABLATION_SEEDS)} seeds")


# -- 8: property conditioning ------------------------------------------------------


def test_criterion_08_property_conditioning(capsys):
    vocab = default_vocabulary()
    records = carbon_tree_records(40, seed=811)
    streams = [tokenize(r.selfies) for r in records]
    props = [float(r.graph2d().heavy_atom_count()) for r in records]
    normalizer = (float(np.mean(props)), float(np.std(props)))
    cfg = LmConfig(vocab_size=len(vocab), n_layers=2, hidden_dim=64, n_heads=4,
                   max_seq_len=48)

    def sample_mae(model, soft_prompt, rng):
        draws = sample_sequences(model, 64, temperature=1.0,
                                 soft_prompt=soft_prompt, rng=rng)
        vals = [abs(decode(s.vocab_ids, vocab).heavy_atom_count()
                    - CONDITIONAL_TARGET) for s in draws]
        return float(np.mean(vals))

    wins, rows = 0, []
    for seed in CONDITIONAL_SEEDS:
        uncond = train_lm(streams, cfg, epochs=CONDITIONAL_EPOCHS, batch_size=8,
                          rng=RngStream(seed), lr=1e-3)
        prompt_net = PropertyPromptNet(cfg.hidden_dim, k=4,
                                       rng=RngStream(seed).substream("prompt"))
        cond = train_lm(streams, cfg, epochs=CONDITIONAL_EPOCHS, batch_size=8,
                        rng=RngStream(seed), lr=1e-3, properties=props,
                        prompt_net=prompt_net, normalizer=normalizer)
        sp = make_soft_prompt(prompt_net, CONDITIONAL_TARGET, normalizer)
        mae_u = sample_mae(uncond.model, None, RngStream(seed).substream("su"))
        mae_c = sample_mae(cond.model, sp, RngStream(seed).substream("sc"))
        wins += mae_c < mae_u
        rows.append(f"seed {seed}: {mae_c:.2f} vs {mae_u:.2f}")
    _verdict(capsys, 8, wins == len(CONDITIONAL_SEEDS),
             f"{wins}/{len(CONDITIONAL_SEEDS)} paired wins; " + "; ".join(rows))


# -- 9: frozen language model ------------------------------------------------------


def test_criterion_09_lm_frozen_through_stage2(capsys, overfit_run):
    r = overfit_run
    ok = r["lm_hash_before"] == r["lm_hash_after"]
    _verdict(capsys, 9, ok,
             f"checkpoint byte hash {'unchanged' if ok else 'CHANGED'} "
             f"({r['lm_hash_before'][:12]})")


# -- 10: metric extremes on self-evaluation ----------------------------------------


def test_criterion_10_self_evaluation_extremes(capsys, overfit_run):
    report = overfit_run["report_self"]
    scores = report["scores"]
    per_type = report["geometry"]["per_type"]
    n_keys = sum(len(v) for v in per_type.values())
    worst = max((v for fam in per_type.values() for v in fam.values()),
                default=float("inf"))
    ok = (
        scores["vc"] == 1.0
        and scores["vun"] == 0.0
        and n_keys > 0
        and worst <= 1e-12
    )
    _verdict(capsys, 10, ok,
             f"vc {scores['vc']}, vun {scores['vun']}, {n_keys} type keys, "
             f"max self-mmd {worst:.1e}")
