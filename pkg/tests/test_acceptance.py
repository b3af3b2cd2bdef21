"""Acceptance criteria. Each test prints one PASS/FAIL line with its measured values.

The two sweep criteria train real models and take several minutes each; they
are marked ``slow`` (deselect with ``-m "not slow"``).
"""

import json
import time
from dataclasses import replace

import numpy as np
import pytest

from kgnn import autograd as ag
from kgnn.autograd import Tensor
from kgnn.cli import main
from kgnn.data import read_corpus
from kgnn.gradcheck import run_gradcheck
from kgnn.knowledge import COREF
from kgnn.model import KGNN, Batch, ModelConfig
from kgnn.nn import Adam
from kgnn.prediction import shared_norm_distribution
from kgnn.reasoner import GraphTensors, ReasonStep, propagate, reason, relation_attention
from kgnn.synthetic import SyntheticTaskSpec, generate_corpus
from kgnn.training import build_vocabulary, prepare_corpus
from kgnn.metrics import score_question

from conftest import FIXTURES
from metric_cases import CASES, FIELDS
from test_reasoner import chain_graph, propagate_oracle, random_case


@pytest.fixture
def verdict(capsys):
    def emit(number, name, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number} {'PASS' if ok else 'FAIL'} {name}: {detail}")
        return ok

    return emit


def test_criterion_1_gradient_integrity(verdict):
    began = time.perf_counter()
    result = run_gradcheck()
    seconds = time.perf_counter() - began
    ok = result.max_relative_error < 1e-4 and seconds < 60
    verdict(1, "gradient integrity", ok,
            f"max relative error {result.max_relative_error:.3e} (< 1e-4) over {result.num_parameters} "
            f"parameters, {seconds:.1f}s (< 60s)")
    assert ok


def test_criterion_2_propagation_oracle(verdict):
    began = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        n, k, edges = random_case(rng)
        step = ReasonStep(5, k, rng)
        step.relation_embedding.data = rng.normal(size=(k, 5))
        states = rng.normal(size=(n, 5))
        alpha = rng.dirichlet(np.ones(k))
        got = propagate(Tensor(states), GraphTensors.single(chain_graph(n, edges, k), [n]), Tensor(alpha), step).data
        worst = max(worst, float(np.abs(got - propagate_oracle(states, edges, alpha, step)).max()))
    seconds = time.perf_counter() - began
    ok = worst <= 1e-10 and seconds < 10
    verdict(2, "propagation oracle", ok, f"max abs diff {worst:.2e} (<= 1e-10) on 100 graphs, {seconds:.2f}s (< 10s)")
    assert ok


def test_criterion_3_structural_invariants(verdict):
    began = time.perf_counter()
    rng = np.random.default_rng(1)
    failures = []

    for kinds in (1, 3, 11):
        step = ReasonStep(6, kinds, rng)
        alpha = relation_attention(Tensor(rng.normal(0, 5, (20, 6))), step).data
        if not ((alpha >= 0).all() and np.abs(alpha.sum(-1) - 1).max() <= 1e-9):
            failures.append(f"alpha with {kinds} kinds")

    for count in (1, 4, 30):
        parts = [rng.normal(0, 4, int(rng.integers(1, 40))) for _ in range(count)]
        s, e = shared_norm_distribution(parts, parts)
        if abs(s.sum() - 1) > 1e-6 or abs(e.sum() - 1) > 1e-6:
            failures.append(f"shared norm with {count} paragraphs")

    spec = SyntheticTaskSpec(num_entities=300, num_questions=6, paragraphs_per_question=6, seed=4, world_seed=4)
    world, examples = generate_corpus(spec)
    config = ModelConfig(d_model=8, word_dim=4, char_dim=4, char_filters=4)
    prepared = prepare_corpus(examples, world.store, config, require_span=True)
    again = prepare_corpus(examples, world.store, config, require_span=True)
    if [p.graph.dumps() for p in prepared] != [p.graph.dumps() for p in again]:
        failures.append("graph construction not deterministic")
    for p in prepared:
        g = p.graph
        coref = g.kind_index(COREF)
        for i in range(g.num_nodes):
            if any(i not in g.neighbors(j, coref) for j in g.neighbors(i, coref)):
                failures.append(f"coref asymmetric in {p.id}")

    vocab = build_vocabulary(prepared)
    model = KGNN(config, vocab, seed=0)
    batch = Batch.build(prepared, vocab, config)
    out = model.forward(batch, num_steps=0)
    identity = reason(out.initial, batch.paragraph_mask, batch.graph, out.summary, model.steps, 0)
    if not np.array_equal(identity.data, out.initial.data):
        failures.append("T=0 not identity")

    traced = model.forward(batch, num_steps=2, keep_trace=True)
    has_edge = batch.graph.adjacency.sum(axis=(0, 2)) > 0
    for tr in traced.trace:
        if tr.node_updates.data[~has_edge].any():
            failures.append("isolated node received an update")

    plain = replace(config, use_graph=False)
    flat = prepare_corpus(examples, world.store, plain, require_span=True)
    empty = KGNN(plain, vocab, seed=0).forward(Batch.build(flat, vocab, plain), num_steps=2, keep_trace=True)
    if any(tr.token_updates.data.any() for tr in empty.trace):
        failures.append("empty graph gave non-zero U")

    seconds = time.perf_counter() - began
    ok = not failures and seconds < 30
    verdict(3, "structural invariants", ok, f"{len(failures)} violations {failures[:3]}, {seconds:.1f}s (< 30s)")
    assert ok


def test_criterion_4_metric_oracle(verdict):
    began = time.perf_counter()
    mismatches = []
    for name, pred, gold, psp, gsp, *expected in CASES:
        score = score_question(name, pred, gold, psp, gsp)
        for field, want in zip(FIELDS, expected):
            if abs(getattr(score, field) - want) > 1e-12:
                mismatches.append(f"{name}.{field}")
    named = score_question("x", "a b c", "b c d", set(), set()).f1
    seconds = time.perf_counter() - began
    ok = len(CASES) >= 20 and not mismatches and abs(named - 2 / 3) <= 1e-15 and seconds < 5
    verdict(4, "metric oracle", ok,
            f"{len(CASES)} cases, {len(mismatches)} mismatches {mismatches[:3]}, F1('a b c','b c d')={named:.6f}, {seconds:.2f}s")
    assert ok


def test_criterion_5_learning_sanity(verdict):
    began = time.perf_counter()
    spec = SyntheticTaskSpec(num_entities=200, num_questions=10, paragraphs_per_question=4, seed=5, world_seed=5)
    world, examples = generate_corpus(spec)
    config = ModelConfig()
    prepared = prepare_corpus(examples, world.store, config, require_span=True)
    vocab = build_vocabulary(prepared)
    model = KGNN(config, vocab, seed=0)
    batch = Batch.build(prepared, vocab, config)
    opt = Adam(model.trainable_parameters(), lr=1e-3, clip_norm=5.0)
    losses = []
    for _ in range(200):
        opt.zero_grad()
        loss = model.loss(batch)
        losses.append(loss.item())
        ag.backward(loss)
        opt.step()
    final = model.loss(batch).item()
    seconds = time.perf_counter() - began
    ok = len(prepared) == 10 and final < 0.05 and seconds < 120
    verdict(5, "learning sanity", ok,
            f"loss {losses[0]:.3f} -> {final:.2e} (< 0.05) after 200 Adam steps on 10 questions, {seconds:.1f}s (< 120s)")
    assert ok


@pytest.mark.slow
def test_criterion_6_layer_number(verdict, tmp_path):
    began = time.perf_counter()
    assert main(["sweep-layers", "--output-dir", str(tmp_path)]) == 0
    seconds = time.perf_counter() - began
    table = json.loads((tmp_path / "layer_sweep.json").read_text())
    rows = {r["T"]: r for r in table["rows"]}
    gain = rows[2]["em"] - rows[1]["em"]
    chance = rows[0]["chance"]
    ok = (
        table["meta"]["dev_questions"] >= 500
        and gain >= 0.05
        and rows[0]["bridge_em"] <= 2 * chance
        and seconds < 20 * 60
    )
    detail = ", ".join(f"T={t} EM {r['em']:.3f} joint F1 {r['joint_f1']:.3f}" for t, r in sorted(rows.items()))
    verdict(6, "layer number", ok,
            f"{detail}; T2-T1 EM gain {100 * gain:.1f} pts (>= 5), T=0 bridge EM {rows[0]['bridge_em']:.3f} "
            f"(<= 2x chance {2 * chance:.3f}), dev {table['meta']['dev_questions']}, {seconds / 60:.1f} min (< 20)")
    assert ok


@pytest.mark.slow
def test_criterion_7_paragraph_robustness(verdict, tmp_path):
    began = time.perf_counter()
    assert main(["sweep-paragraphs", "--output-dir", str(tmp_path)]) == 0
    seconds = time.perf_counter() - began
    table = json.loads((tmp_path / "paragraph_sweep.json").read_text())
    counts = [r["paragraphs"] for r in table["rows"]]
    drop = table["meta"]["degradation"]
    ok = counts == [4, 10, 20, 30] and drop["kgnn"]["relative"] < drop["ablation"]["relative"] and seconds < 30 * 60
    detail = "; ".join(
        f"{r['paragraphs']}p KGNN {r['kgnn_joint_f1']:.3f} ablation {r['ablation_joint_f1']:.3f}" for r in table["rows"]
    )
    verdict(7, "paragraph robustness", ok,
            f"{detail}; relative joint-F1 degradation 4->30 KGNN {drop['kgnn']['relative']:.3f} vs ablation "
            f"{drop['ablation']['relative']:.3f} (absolute {drop['kgnn']['absolute']:.3f} vs "
            f"{drop['ablation']['absolute']:.3f}), {seconds / 60:.1f} min (< 30)")
    assert ok


def test_criterion_8_hotpot_format(verdict):
    began = time.perf_counter()
    examples = read_corpus(FIXTURES / "hotpot_dev_sample.json")
    seconds = time.perf_counter() - began
    ok = (
        len(examples) == 2
        and all(len(e.paragraphs) == 3 and e.supporting_facts and e.answer for e in examples)
        and seconds < 5
    )
    verdict(8, "HotpotQA format", ok, f"parsed {len(examples)} records with context and supporting facts, {seconds:.3f}s (< 5s)")
    assert ok
