"""Acceptance gate: one test per release criterion, each printing a single
PASS/FAIL line.

The full-sequence criteria run the bundled digits dataset end to end and are
slow (minutes each); run this file with ``pytest tests/test_acceptance.py -s``
to watch the per-criterion lines.
"""

import dataclasses
import json
import subprocess
import sys
import time

import numpy as np
import pytest
import torch

from airdefense import data
from airdefense.attacks import AttackSpec, NO_ATTACK, craft, fgsm, pgd
from airdefense.harness import (export_features, forgetting_metrics,
                                run_sequence)
from airdefense.losses import air_loss, at_loss, kl_div, rdrop_reg
from airdefense.models import Architecture, Classifier, snapshot
from airdefense.replay import DIGITS_POLICY
from airdefense.seeding import make_generator, spawn
from airdefense.tasks import TrainingConfig
from helpers import analytic_grad, fd_grad, relative_error

SEEDS = (0, 1, 2)


def _report(criterion: str, passed: bool, detail: str) -> None:
    print(f"\n{'PASS' if passed else 'FAIL'} {criterion}: {detail}")
    assert passed, f"{criterion}: {detail}"


# --- shared desk-scale runs ---------------------------------------------------

@pytest.fixture(scope="module")
def bundle():
    return data.load_dataset("digits")


def _desk_cfg(method: str, seed: int, policy) -> TrainingConfig:
    return TrainingConfig(method=method, learning_rate=0.02, momentum=0.9,
                          batch_size=128, epochs=25, dropout_rate=0.1,
                          augmentation=policy, seed=seed,
                          epoch_eval_samples=0)


def _run(bundle, attacks, method, seed):
    seq = data.build_sequence(bundle, attacks, seed=seed)
    cfg = _desk_cfg(method, seed, bundle.policy)
    arch = dataclasses.replace(bundle.arch, dropout_rate=cfg.dropout_rate)
    return run_sequence(seq, cfg, arch)


@pytest.fixture(scope="module")
def forgetting_runs(bundle):
    """vanilla/air/joint on the forgetting-prone PGD -> FGSM sequence."""
    attacks = [("pgd", data.DESK_PGD), ("fgsm", data.DESK_FGSM)]
    out = {}
    for method in ("vanilla", "air", "joint"):
        for seed in SEEDS:
            out[(method, seed)] = _run(bundle, attacks, method, seed)
    return out


# --- criterion 1: attack soundness --------------------------------------------

def test_criterion_1_attack_soundness():
    start = time.monotonic()
    arch = Architecture(input_shape=(1, 8, 8), conv_channels=(),
                        hidden_sizes=(16,))
    models = []
    for s in range(4):
        torch.manual_seed(s)
        models.append(Classifier(arch))
    gen = make_generator(0)
    violations = 0
    for trial in range(1000):
        model = models[trial % len(models)]
        x = torch.rand((3, 1, 8, 8), generator=gen)
        y = torch.randint(0, 10, (3,), generator=gen)
        eps = float(torch.rand((), generator=gen)) * 0.5 + 0.01
        if trial % 2 == 0:
            spec = AttackSpec("fgsm", epsilon=eps)
        else:
            spec = AttackSpec("pgd", epsilon=eps, step_size=eps / 2,
                              iterations=1 + trial % 4,
                              random_start=bool(trial % 3))
        adv = craft(model, x, y, spec, gen)
        if float((adv - x).abs().max()) > eps + 1e-6:
            violations += 1
        if float(adv.min()) < 0.0 or float(adv.max()) > 1.0:
            violations += 1

    # PGD with a single full-size step and no random start must equal FGSM
    bitwise = True
    for s in range(20):
        model = models[s % len(models)]
        x = torch.rand((4, 1, 8, 8), generator=gen)
        y = torch.randint(0, 10, (4,), generator=gen)
        eps = 0.01 + 0.02 * s
        a = fgsm(model, x, y, AttackSpec("fgsm", epsilon=eps))
        b = pgd(model, x, y, AttackSpec("pgd", epsilon=eps, step_size=eps,
                                        iterations=1, random_start=False))
        bitwise = bitwise and torch.equal(a, b)

    elapsed = time.monotonic() - start
    _report("criterion-1 attack soundness",
            violations == 0 and bitwise and elapsed < 120,
            f"0 budget/box violations required (got {violations}), "
            f"PGD(K=1)==FGSM bitwise={bitwise}, {elapsed:.1f}s < 120s")


# --- criterion 2: gradient oracles ---------------------------------------------

def test_criterion_2_gradient_oracles():
    start = time.monotonic()
    arch = Architecture(input_shape=(1, 8, 8), conv_channels=(),
                        hidden_sizes=(8,), dropout_rate=0.3, activation="tanh")

    def model(seed):
        torch.manual_seed(seed)
        return Classifier(arch).double()

    gen = make_generator(0)
    x = torch.rand((4, 1, 8, 8), generator=gen, dtype=torch.float64)
    x2 = torch.rand((4, 1, 8, 8), generator=gen, dtype=torch.float64)
    y = torch.randint(0, 10, (4,), generator=gen)
    teacher = snapshot(model(1))

    cases = {
        "air_loss": (model(2), lambda m: air_loss(
            m, teacher, x, y, NO_ATTACK, DIGITS_POLICY, (1.0, 0.5),
            make_generator(7)).total),
        "rdrop_reg": (model(3), lambda m: rdrop_reg(m, x, x2,
                                                    make_generator(8))),
    }
    from airdefense.baselines import ewc_penalty, fisher_diag, lfl_penalty
    fisher = fisher_diag(model(1), x, y, NO_ATTACK)
    cases["ewc_penalty"] = (model(4),
                            lambda m: ewc_penalty(m, teacher, fisher, 10.0))
    cases["lfl_penalty"] = (model(5),
                            lambda m: lfl_penalty(m, teacher, x, 0.7))

    errors = {}
    for name, (m, loss_fn) in cases.items():
        n_params = sum(p.numel() for p in m.parameters())
        assert n_params <= 1000, f"{name} oracle model has {n_params} params"
        errors[name] = relative_error(analytic_grad(m, loss_fn),
                                      fd_grad(m, loss_fn))

    elapsed = time.monotonic() - start
    worst = max(errors.values())
    _report("criterion-2 gradient oracles",
            worst < 1e-4 and elapsed < 300,
            "max relative error "
            + ", ".join(f"{k}={v:.2e}" for k, v in errors.items())
            + f"; worst {worst:.2e} < 1e-4, {elapsed:.1f}s < 300s")


# --- criterion 3: loss identities ----------------------------------------------

def test_criterion_3_loss_identities():
    arch = Architecture(input_shape=(1, 8, 8), conv_channels=(),
                        hidden_sizes=(8,), dropout_rate=0.3, activation="tanh")
    torch.manual_seed(0)
    student = Classifier(arch).double()
    torch.manual_seed(1)
    teacher = snapshot(Classifier(arch).double())
    gen = make_generator(0)
    x = torch.rand((6, 1, 8, 8), generator=gen, dtype=torch.float64)
    y = torch.randint(0, 10, (6,), generator=gen)

    logits = torch.randn(5, 10, generator=gen, dtype=torch.float64)
    kl_self = abs(float(kl_div(logits, logits)))

    b = air_loss(student, teacher, x, y, NO_ATTACK, DIGITS_POLICY, (1.3, 0.7),
                 make_generator(5))
    nonneg = min(float(t.detach()) for t in (b.ir, b.ar, b.reg)) >= 0.0
    recomposed = b.at + b.lambda_sd * (b.ir + b.ar) + b.lambda_reg * b.reg
    rel = abs(float(b.total.detach()) - float(recomposed.detach())) / \
        abs(float(b.total.detach()))

    # zero weights: identical parameter trajectory to vanilla AT
    def train(loss_kind, seed=9, steps=5):
        torch.manual_seed(2)
        m = Classifier(arch).double()
        opt = torch.optim.SGD(m.parameters(), lr=0.05, momentum=0.9)
        rng = make_generator(seed)
        for _ in range(steps):
            if loss_kind == "air0":
                loss = air_loss(m, teacher, x, y, NO_ATTACK, DIGITS_POLICY,
                                (0.0, 0.0), rng, rdrop_probability=0.1).total
            else:
                loss = at_loss(m, x, y, NO_ATTACK, rng, rdrop_probability=0.1)
            opt.zero_grad()
            loss.backward()
            opt.step()
        return torch.nn.utils.parameters_to_vector(m.parameters()).detach()

    collapse = torch.equal(train("air0"), train("vanilla"))

    _report("criterion-3 loss identities",
            kl_self < 1e-12 and nonneg and rel < 1e-9 and collapse,
            f"kl(p,p)={kl_self:.1e}, terms nonneg={nonneg}, "
            f"recomposition rel err={rel:.1e} < 1e-9, "
            f"zero-weight trajectory == vanilla: {collapse}")


# --- criteria 4-6: forgetting, mitigation, joint bound ---------------------------

def test_criterion_4_forgetting_reproduction(forgetting_runs):
    drops = {}
    for seed in SEEDS:
        acc = forgetting_runs[("vanilla", seed)].matrix.accuracy
        drops[seed] = float(acc[0, 0] - acc[1, 0])
    hits = sum(d >= 0.30 for d in drops.values())
    _report("criterion-4 forgetting reproduction", hits >= 2,
            "vanilla task-1 drop per seed "
            + ", ".join(f"s{k}={v:+.3f}" for k, v in drops.items())
            + f"; {hits}/3 seeds >= 0.30 (need >= 2)")


def test_criterion_5_air_mitigation(forgetting_runs):
    details, hits = [], 0
    for seed in SEEDS:
        v = forgetting_runs[("vanilla", seed)].matrix
        a = forgetting_runs[("air", seed)].matrix
        margin = float(a.accuracy[1, 0] - v.accuracy[1, 0])
        bwt_gain = (forgetting_metrics(a)["backward_transfer"]
                    - forgetting_metrics(v)["backward_transfer"])
        ok = margin >= 0.15 and bwt_gain > 0
        hits += ok
        details.append(f"s{seed}: retention margin {margin:+.3f}, "
                       f"bwt gain {bwt_gain:+.3f}")
    _report("criterion-5 air mitigation", hits >= 2,
            "; ".join(details) + f"; {hits}/3 seeds pass (need >= 2)")


def test_criterion_6_joint_bound(forgetting_runs):
    details, hits = [], 0
    for seed in SEEDS:
        joint_avg = float(
            np.nanmean(forgetting_runs[("joint", seed)].matrix.accuracy[-1]))
        seq_avg = forgetting_metrics(
            forgetting_runs[("vanilla", seed)].matrix)["average_accuracy"]
        ok = joint_avg >= seq_avg
        hits += ok
        details.append(f"s{seed}: joint {joint_avg:.3f} vs vanilla {seq_avg:.3f}")
    _report("criterion-6 joint upper bound", hits >= 2,
            "; ".join(details) + f"; {hits}/3 seeds pass (need >= 2)")


# --- criterion 7: budget transfer ------------------------------------------------

def test_criterion_7_budget_transfer(bundle):
    attacks = [("strong_pgd", data.DESK_STRONG_PGD),
               ("weak_pgd", data.DESK_WEAK_PGD)]
    vanilla = _run(bundle, attacks, "vanilla", 0).matrix.accuracy
    air = _run(bundle, attacks, "air", 0).matrix.accuracy
    drop = float(vanilla[0, 0] - vanilla[1, 0])
    _report("criterion-7 budget transfer",
            drop >= 0.15 and air[1, 0] > vanilla[1, 0],
            f"vanilla strong-task drop {drop:+.3f} (need >= 0.15); "
            f"air retention {air[1, 0]:.3f} > vanilla {vanilla[1, 0]:.3f}")


# --- criterion 8: cluster homogeneity ---------------------------------------------

def test_criterion_8_cluster_homogeneity(bundle):
    attacks = [("none", data.DESK_NONE), ("fgsm", data.DESK_HARD_FGSM),
               ("pgd", data.DESK_WEAK_PGD)]
    scores = {}
    for method in ("vanilla", "air"):
        result = _run(bundle, attacks, method, 0)
        seq = data.build_sequence(bundle, attacks, seed=0)
        export = export_features(result.snapshots[-1]._module, seq.tasks,
                                 200, spawn(0, "features"))
        scores[method] = export.per_class_homogeneity
    wins = sum(1 for cls in range(10)
               if scores["air"].get(cls, np.inf)
               < scores["vanilla"].get(cls, np.inf))
    _report("criterion-8 cluster homogeneity", wins >= 7,
            f"air ratio below vanilla on {wins}/10 classes (need >= 7)")


# --- criterion 9: determinism ------------------------------------------------------

def test_criterion_9_determinism(tmp_path):
    config = {
        "name": "determinism", "dataset": "digits", "method": "air", "seed": 3,
        "sequence": [
            {"name": "benign", "attack": {"family": "none"}},
            {"name": "fgsm", "attack": {"family": "fgsm", "epsilon": 0.05}},
        ],
        "training": {"epochs": 2, "batch_size": 64, "epoch_eval_samples": 0},
        "train_size": 256, "test_size": 128,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(config))
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        proc = subprocess.run(
            [sys.executable, "-m", "airdefense.cli", "run",
             "--config", str(cfg_path), "--out", str(out)],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outputs.append((out / "matrix.csv").read_bytes())
    _report("criterion-9 determinism", outputs[0] == outputs[1],
            "matrix.csv identical across two fresh-process runs: "
            f"{outputs[0] == outputs[1]}")
