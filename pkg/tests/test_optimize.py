import json
import math

import numpy as np
import pytest

from conftest import random_instance
from reference_impls import (
    prox_objective,
    prox_subgradient_residual,
    simplex_bisection_oracle,
    simplex_grid_search,
)
from typespace import synth
from typespace.objective import nuclear_norm
from typespace.optimize import (
    NonFiniteGradientError,
    TrainConfig,
    TrainData,
    TrainingDivergedError,
    adagrad_step,
    anchor_prox_scale,
    project_to_simplex,
    prox_nuclear,
    train,
    tune,
)
from typespace.params import Hyperparams, init_parameters


class TestProjectToSimplex:
    def test_feasible_unchanged(self):
        v = np.array([0.2, 0.3, 0.5])
        assert np.allclose(project_to_simplex(v), v, atol=1e-15)

    def test_single_heavy_coordinate(self):
        assert np.allclose(project_to_simplex(np.array([2.0, 0.0, 0.0])), [1.0, 0.0, 0.0])

    def test_symmetric_excess(self):
        assert np.allclose(project_to_simplex(np.array([0.4, 0.4, 0.4])), [1 / 3] * 3)

    def test_idempotent_and_feasible(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            v = rng.normal(scale=3.0, size=int(rng.integers(2, 10)))
            p = project_to_simplex(v)
            assert np.all(p >= 0.0)
            assert abs(p.sum() - 1.0) <= 1e-12
            assert np.max(np.abs(project_to_simplex(p) - p)) <= 1e-12

    def test_matches_bisection_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            v = rng.normal(scale=2.5, size=3)
            assert np.max(np.abs(project_to_simplex(v) - simplex_bisection_oracle(v))) <= 1e-6

    def test_never_beats_grid_by_more_than_resolution(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            v = rng.normal(scale=1.5, size=3)
            p = project_to_simplex(v)
            _, grid_val = simplex_grid_search(v, steps=60)
            assert float(np.sum((p - v) ** 2)) <= grid_val + 1e-12

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            project_to_simplex(np.array([np.nan, 0.0]))


class TestProxNuclear:
    def test_tau_zero_identity(self):
        m = np.random.default_rng(0).normal(size=(4, 4))
        assert np.array_equal(prox_nuclear(m, 0.0), m)

    def test_diagonal_shrinkage(self):
        out = prox_nuclear(np.diag([3.0, 1.0]), 1.0)
        assert np.allclose(out, np.diag([2.0, 0.0]), atol=1e-12)

    def test_never_increases_nuclear_norm(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            m = rng.normal(size=(5, 5))
            tau = float(rng.uniform(0.0, 2.0))
            assert nuclear_norm(prox_nuclear(m, tau)) <= nuclear_norm(m) + 1e-10

    def test_firmly_nonexpansive(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            a = rng.normal(size=(4, 4))
            b = rng.normal(size=(4, 4))
            tau = float(rng.uniform(0.0, 2.0))
            pa, pb = prox_nuclear(a, tau), prox_nuclear(b, tau)
            assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-10

    def test_subgradient_optimality(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            m = rng.normal(size=(5, 5))
            x = prox_nuclear(m, 0.7)
            assert prox_subgradient_residual(x, m, 0.7) < 1e-8

    def test_perturbation_certification(self):
        rng = np.random.default_rng(6)
        m = rng.normal(size=(5, 5))
        x = prox_nuclear(m, 0.7)
        fx = prox_objective(x, m, 0.7)
        for _ in range(1000):
            d = rng.normal(size=(5, 5))
            d *= rng.uniform(0.0, 0.1) / np.linalg.norm(d)
            assert fx <= prox_objective(x + d, m, 0.7) + 1e-12

    def test_negative_tau_rejected(self):
        with pytest.raises(ValueError):
            prox_nuclear(np.eye(2), -0.1)


class TestAdagrad:
    def test_zero_gradient_no_change(self):
        v = np.array([1.0, 2.0])
        state = np.array([0.5, 0.5])
        adagrad_step(v, np.zeros(2), state, lr=0.1)
        assert np.array_equal(v, [1.0, 2.0])

    def test_first_step_delta(self):
        v = np.array([0.0])
        state = np.zeros(1)
        adagrad_step(v, np.array([1.0]), state, lr=0.05)
        # -0.05 * 1 / sqrt(1 + 1e-8), frozen
        assert v[0] == pytest.approx(-0.04999999975, rel=1e-12)
        assert state[0] == 1.0

    def test_second_step_smaller(self):
        v = np.array([0.0])
        state = np.zeros(1)
        adagrad_step(v, np.array([1.0]), state, lr=0.05)
        first = abs(v[0])
        before = v[0]
        adagrad_step(v, np.array([1.0]), state, lr=0.05)
        assert abs(v[0] - before) < first

    def test_non_finite_gradient_names_parameter(self):
        v = np.array([0.0])
        with pytest.raises(NonFiniteGradientError, match="entity\\[3\\]"):
            adagrad_step(v, np.array([np.nan]), np.zeros(1), lr=0.1, name="entity[3]")


class TestTrainConfig:
    def test_deterministic_requires_single_thread(self):
        with pytest.raises(ValueError):
            TrainConfig(hp=Hyperparams(epochs=1), threads=2, deterministic=True)

    def test_racy_mode_allowed(self):
        cfg = TrainConfig(hp=Hyperparams(epochs=1), threads=4, deterministic=False)
        assert cfg.threads == 4


def _simplex_ok(params, tol=1e-9):
    for tp in params.types.per_type.values():
        assert np.all(tp.coeffs >= -tol)
        assert np.max(np.abs(tp.coeffs.sum(axis=1) - 1.0)) <= tol
    for groups in (params.rels.rhs_groups, params.rels.lhs_groups):
        for gp in groups.values():
            assert np.all(gp.coeffs >= -tol)
            assert np.max(np.abs(gp.coeffs.sum(axis=1) - 1.0)) <= tol


class TestTrain:
    def test_text_variant_halves_loss(self):
        data, _, _ = synth.attribute_corpus(n_noise_words=49, seed=2)  # 50-word vocabulary
        hp = Hyperparams(n=8, alpha_mix=1.0, epochs=20, variant="text", seed=4)
        _, report = train(data, TrainConfig(hp=hp, shuffle_seed=4))
        first = report.losses[0].j_text_entity
        last = report.losses[-1].j_text_entity
        assert last < 0.5 * first

    def test_no_nn_never_invokes_prox(self):
        ww, ew, store, params, _ = random_instance(0)
        data = TrainData(6, 5, ww, ew, synth.empty_type_system(), store)
        hp = Hyperparams(n=4, alpha_mix=0.5, beta_reg=100.0, epochs=3, variant="no_nn", seed=0)
        _, report = train(data, TrainConfig(hp=hp, shuffle_seed=0))
        assert report.prox_calls == 0

    def test_deterministic_reruns_identical(self):
        data, _, _ = synth.attribute_corpus(n_entities=30, seed=5)
        hp = Hyperparams(n=4, alpha_mix=1.0, epochs=3, variant="text", seed=9)
        p1, r1 = train(data, TrainConfig(hp=hp, shuffle_seed=9))
        p2, r2 = train(data, TrainConfig(hp=hp, shuffle_seed=9))
        assert np.array_equal(p1.model.entity_points, p2.model.entity_points)
        assert np.array_equal(p1.model.word_vecs, p2.model.word_vecs)
        assert [lb.total for lb in r1.losses] == [lb.total for lb in r2.losses]
        assert r1.dim_trace == r2.dim_trace

    def test_simplex_constraints_after_each_epoch_count(self, micro_dir):
        from typespace import ingest

        docs = ingest.load_corpus(micro_dir["corpus"])
        vocab, catalog = ingest.build_vocab_and_catalog(docs, 3, 3)
        ww = ingest.count_word_word(docs, vocab, 5)
        ew = ingest.count_entity_word(docs, vocab, catalog, 5)
        ts = ingest.load_type_system(micro_dir["instances"], micro_dir["subclass"], catalog)
        store = ingest.load_triples(micro_dir["triples"], catalog)
        data = TrainData.from_ingest(vocab, catalog, ww, ew, ts, store)
        for epochs in (1, 2):
            hp = Hyperparams(n=6, alpha_mix=0.5, beta_reg=5.0, epochs=epochs, variant="full", seed=2)
            params, _ = train(data, TrainConfig(hp=hp, shuffle_seed=2))
            _simplex_ok(params)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts_with_snapshot(self):
        data, _, _ = synth.attribute_corpus(n_entities=30, seed=6)
        hp = Hyperparams(n=4, alpha_mix=1.0, epochs=10, learn_rate=1e200, variant="text", seed=1)
        with pytest.raises(TrainingDivergedError) as exc_info:
            train(data, TrainConfig(hp=hp, shuffle_seed=1))
        # The snapshot is either None (first epoch diverged) or finite.
        snap = exc_info.value.last_good
        if snap is not None:
            assert np.all(np.isfinite(snap.model.entity_points))

    def test_epoch_log_written(self, tmp_path):
        data, _, _ = synth.attribute_corpus(n_entities=30, seed=7)
        hp = Hyperparams(n=4, alpha_mix=1.0, epochs=2, variant="text", seed=1)
        log_path = tmp_path / "log.jsonl"
        train(data, TrainConfig(hp=hp, shuffle_seed=1, log_path=str(log_path)))
        lines = [json.loads(line) for line in log_path.read_text().strip().split("\n")]
        assert len(lines) == 2
        assert lines[0]["epoch"] == 1
        for key in ("j_glove", "j_text_entity", "j_type", "total", "wall_ms", "dims"):
            assert key in lines[0]

    def test_racy_mode_runs(self):
        data, _, _ = synth.attribute_corpus(n_entities=30, seed=8)
        hp = Hyperparams(n=4, alpha_mix=1.0, epochs=2, variant="text", seed=1)
        _, report = train(data, TrainConfig(hp=hp, threads=3, deterministic=False, shuffle_seed=1))
        assert math.isfinite(report.losses[-1].total)

    def test_loss_trend_on_bundled_fixtures(self):
        # Epoch-20 total strictly below epoch-1 total on every bundled
        # synthetic fixture (stochastic steps preclude per-step monotonicity).
        runs = []
        data, _, _ = synth.attribute_corpus(seed=9)
        runs.append((data, Hyperparams(n=6, alpha_mix=1.0, epochs=20, variant="text", seed=3), None))
        chain = synth.chain_graph(12)
        runs.append((chain, Hyperparams(n=6, alpha_mix=0.0, epochs=20, variant="rel_dist", seed=3), None))
        sub_data, pts = synth.subspace_fixture(n_entities=40, seed=10)
        hp_sub = Hyperparams(n=10, alpha_mix=0.0, beta_reg=2.0, epochs=20, learn_rate=0.2, variant="no_rel", seed=3)
        init = init_parameters(sub_data.n_entities, 1, sub_data.type_system, sub_data.triples, hp_sub)
        init.model.entity_points[:] = pts
        runs.append((sub_data, hp_sub, init))
        for data, hp, start in runs:
            _, report = train(data, TrainConfig(hp=hp, shuffle_seed=3), start)
            assert report.losses[-1].total < report.losses[0].total

    def test_report_epoch_count(self):
        data, _, _ = synth.attribute_corpus(n_entities=30, seed=11)
        hp = Hyperparams(n=3, alpha_mix=1.0, epochs=5, variant="text", seed=0)
        _, report = train(data, TrainConfig(hp=hp, shuffle_seed=0))
        assert report.epochs == 5
        assert len(report.wall_ms) == 5
        assert len(report.dim_trace) == 5


class TestAnchorProxScale:
    def test_scale_decreases_with_accumulation(self):
        lr = 0.05
        small = anchor_prox_scale(lr, np.full((3, 2), 1.0))
        big = anchor_prox_scale(lr, np.full((3, 2), 100.0))
        assert big < small


class TestTune:
    def test_constant_callback_tie_rule(self):
        best = tune(lambda hp: 1.0, Hyperparams(epochs=1))
        assert best.beta_reg == 50.0
        assert best.alpha_mix == 0.0

    def test_unique_maximum(self):
        def objective(hp):
            return -abs(hp.alpha_mix - 0.5) - abs(hp.beta_reg - 300.0)

        best = tune(objective, Hyperparams(epochs=1))
        assert best.alpha_mix == 0.5
        assert best.beta_reg == 300.0

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            tune(lambda hp: 0.0, Hyperparams(epochs=1), alphas=[], betas=[1.0])

    def test_custom_grid(self):
        best = tune(lambda hp: hp.beta_reg, Hyperparams(epochs=1), alphas=[0.2], betas=[1.0, 2.0])
        assert best.beta_reg == 2.0
        assert best.alpha_mix == 0.2
