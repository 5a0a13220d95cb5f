import json
from dataclasses import replace

import numpy as np
import pytest

from gnnonline.data import DatasetBundle
from gnnonline.graph import build_graph
from gnnonline.harness import (
    AdamState,
    ExperimentConfig,
    PreparedDataset,
    RunRecord,
    TrainingDivergedError,
    adam_step,
    enumerate_grid,
    evaluate,
    read_records,
    run_grid,
    run_seed,
    run_single,
    split_seed,
    train_epoch,
)
from gnnonline.models import GraphInputs, ModelConfig, init_params
from gnnonline.rng import derive_seed


class TestAdam:
    def test_zero_gradient_no_decay(self):
        p = {"w": np.array([[1.0, -2.0]])}
        adam_step(p, {"w": np.zeros((1, 2))}, AdamState.fresh(p), lr=0.1, weight_decay=0.0)
        np.testing.assert_array_equal(p["w"], [[1.0, -2.0]])

    def test_first_step_unit_gradient(self):
        p = {"w": np.array([[0.0]])}
        adam_step(p, {"w": np.array([[1.0]])}, AdamState.fresh(p), lr=0.1, weight_decay=0.0)
        assert p["w"][0, 0] == pytest.approx(-0.1, abs=1e-6)

    def test_first_step_decay_only(self):
        p = {"w": np.array([[1.0]])}
        state = AdamState.fresh(p)
        adam_step(p, {"w": np.array([[0.0]])}, state, lr=0.1, weight_decay=0.5)
        assert p["w"][0, 0] == pytest.approx(0.9, abs=1e-6)
        assert state.step == 1
        assert state.m["w"][0, 0] == pytest.approx(0.05)

    def test_against_reference_loop(self, rng):
        """Several steps against a plain scalar transcription of Adam."""
        w0 = rng.normal(size=(3, 2))
        grads = [rng.normal(size=(3, 2)) for _ in range(5)]
        p = {"w": w0.copy()}
        state = AdamState.fresh(p)
        for g in grads:
            adam_step(p, {"w": g}, state, lr=0.01, weight_decay=5e-4)
        for idx in np.ndindex(3, 2):
            w, m, v = w0[idx], 0.0, 0.0
            for t, g in enumerate(grads, 1):
                gi = g[idx] + 5e-4 * w
                m = 0.9 * m + 0.1 * gi
                v = 0.999 * v + 0.001 * gi * gi
                w -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
            assert p["w"][idx] == pytest.approx(w, abs=1e-12)

    def test_shape_mismatch(self):
        p = {"w": np.zeros((2, 2))}
        with pytest.raises(ValueError):
            adam_step(p, {"w": np.zeros((2, 3))}, AdamState.fresh(p), 0.1, 0.0)


def four_node_problem():
    g = GraphInputs(build_graph(4, [(0, 1), (2, 3)]))
    x = np.eye(4)
    labels = np.array([0, 0, 1, 1])
    return g, x, labels


class TestTrainEpoch:
    def test_zero_lr_leaves_params(self, rng):
        g, x, labels = four_node_problem()
        cfg = replace(ModelConfig.default("gcn"), lr=0.0, weight_decay=0.0)
        params = init_params(cfg, 4, 2, rng)
        before = {k: v.copy() for k, v in params.items()}
        state = AdamState.fresh(params)
        losses = [train_epoch(cfg, params, g, x, labels, np.arange(4), state, rng) for _ in range(3)]
        for k in params:
            np.testing.assert_array_equal(params[k], before[k])
        assert all(np.isfinite(losses))

    def test_toy_convergence(self, rng):
        g, x, labels = four_node_problem()
        cfg = replace(ModelConfig.default("gcn"), dropout=0.0, weight_decay=0.0, lr=0.05)
        params = init_params(cfg, 4, 2, rng)
        state = AdamState.fresh(params)
        for _ in range(200):
            loss = train_epoch(cfg, params, g, x, labels, np.arange(4), state, rng)
        assert loss < 0.01
        assert evaluate(cfg, params, g, x, labels, np.arange(4)) == 1.0

    def test_initial_loss_near_log_classes(self, toy_bundle):
        b = toy_bundle
        g = GraphInputs(b.graph())
        cfg = replace(ModelConfig.default("gcn"), lr=0.0)
        losses = []
        for seed in range(20):
            params = init_params(cfg, b.num_features, b.num_classes, np.random.default_rng(seed))
            losses.append(train_epoch(cfg, params, g, b.features, b.labels, np.arange(60),
                                      AdamState.fresh(params), np.random.default_rng(seed)))
        assert abs(np.mean(losses) - np.log(b.num_classes)) <= 0.3

    def test_nan_loss_aborts(self, rng):
        g, x, labels = four_node_problem()
        cfg = ModelConfig.default("gcn")
        params = init_params(cfg, 4, 2, rng)
        params["W1"][0, 0] = np.nan
        with pytest.raises(TrainingDivergedError, match="non-finite"):
            train_epoch(cfg, params, g, x, labels, np.arange(4), AdamState.fresh(params), rng)


class TestEvaluate:
    def test_perfect(self):
        cfg = ModelConfig("mlp", hidden=2, dropout=0.0)
        params = {"W1": np.eye(2), "W2": np.eye(2)}
        x = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 0.0]])
        assert evaluate(cfg, params, None, x, [0, 1, 0], [0, 1, 2]) == 1.0
        assert evaluate(cfg, params, None, x, [1, 1, 1], [0, 1, 2]) == pytest.approx(1 / 3)

    def test_tie_goes_to_lowest_class(self):
        cfg = ModelConfig("mlp", hidden=3)
        params = {"W1": np.zeros((2, 3)), "W2": np.zeros((3, 3))}
        x = np.ones((2, 2))
        assert evaluate(cfg, params, None, x, [0, 0], [0, 1]) == 1.0
        assert evaluate(cfg, params, None, x, [2, 1], [0, 1]) == 0.0

    def test_empty_mask(self):
        cfg = ModelConfig("mlp", hidden=1)
        with pytest.raises(ValueError):
            evaluate(cfg, {"W1": np.zeros((1, 1)), "W2": np.zeros((1, 2))}, None, np.ones((1, 1)), [0], [])

    def test_chance_level_at_init(self, toy_bundle):
        b = toy_bundle
        g = GraphInputs(b.graph())
        cfg = ModelConfig.default("gcn")
        accs = [evaluate(cfg, init_params(cfg, b.num_features, b.num_classes, np.random.default_rng(s)),
                         g, b.features, b.labels, np.arange(b.num_nodes)) for s in range(20)]
        assert abs(np.mean(accs) - 1 / b.num_classes) <= 0.05


@pytest.fixture(scope="module")
def prepared(toy_bundle):
    b = toy_bundle
    masked = DatasetBundle(b.name, b.features, b.labels, b.edges, b.num_classes,
                           train_mask=np.arange(0, 240, 4), test_mask=np.arange(1, 240, 2))
    return {s: PreparedDataset.from_bundle(masked, s, 0) for s in ("A", "B")}


class TestRunSingle:
    def test_length_and_range(self, prepared):
        cfg = ExperimentConfig("gcn", "toy", "A", pretrain_epochs=20, inference_epochs=7, repetitions=1)
        rec = run_single(cfg, 0, 123, prepared["A"])
        assert len(rec.accuracies) == 8 and len(rec.pretrain_loss) == 20
        assert all(0.0 <= a <= 1.0 for a in rec.accuracies)
        assert rec.wall_ms is None

    def test_zero_inference_epochs(self, prepared):
        cfg = ExperimentConfig("sage", "toy", "B", pretrain_epochs=10, inference_epochs=0, repetitions=1)
        assert len(run_single(cfg, 0, 5, prepared["B"]).accuracies) == 1

    @pytest.mark.parametrize("model", ["gcn", "gcn64", "sage", "gat", "mlp"])
    def test_bit_identical(self, prepared, model):
        cfg = ExperimentConfig(model, "toy", "A", pretrain_epochs=5, inference_epochs=3, repetitions=1)
        a = run_single(cfg, 0, 77, prepared["A"])
        b = run_single(cfg, 0, 77, prepared["A"])
        assert a.to_json() == b.to_json()
        assert run_single(cfg, 0, 78, prepared["A"]).to_json() != a.to_json()

    def test_timing_opt_in(self, prepared):
        cfg = ExperimentConfig("mlp", "toy", "A", pretrain_epochs=1, inference_epochs=1, repetitions=1)
        assert run_single(cfg, 0, 1, prepared["A"], timing=True).wall_ms >= 0

    def test_scratch_starts_near_chance(self, prepared):
        cfg = ExperimentConfig("gcn", "toy", "A", pretrain_epochs=0, inference_epochs=0, repetitions=20)
        first = [run_single(cfg, r, run_seed(cfg, r), prepared["A"]).accuracies[0] for r in range(20)]
        assert abs(np.mean(first) - 1 / 3) <= 0.05

    def test_pretraining_helps_at_insertion(self, prepared):
        pre = ExperimentConfig("gcn", "toy", "A", pretrain_epochs=100, inference_epochs=0, repetitions=5)
        acc = [run_single(pre, r, run_seed(pre, r), prepared["A"]).accuracies[0] for r in range(5)]
        assert np.mean(acc) > 0.6

    def test_optimizer_fresh_in_phase_two(self, prepared, monkeypatch):
        import gnnonline.harness as h

        steps_seen = []
        original = h.train_epoch

        def spy(config, params, graph, features, labels, mask, state, rng):
            steps_seen.append((graph.num_nodes, state.step))
            return original(config, params, graph, features, labels, mask, state, rng)

        monkeypatch.setattr(h, "train_epoch", spy)
        cfg = ExperimentConfig("gcn", "toy", "A", pretrain_epochs=4, inference_epochs=3, repetitions=1)
        run_single(cfg, 0, 9, prepared["A"])
        n_train = prepared["A"].split.train.size
        assert steps_seen == [(n_train, 0), (n_train, 1), (n_train, 2), (n_train, 3),
                              (240, 0), (240, 1), (240, 2)]

    def test_pretraining_sees_only_training_nodes(self, prepared, monkeypatch):
        import gnnonline.harness as h

        seen = []
        original = h.train_epoch

        def spy(config, params, graph, features, labels, mask, state, rng):
            seen.append((features.shape[0], np.asarray(labels).copy()))
            return original(config, params, graph, features, labels, mask, state, rng)

        monkeypatch.setattr(h, "train_epoch", spy)
        data = prepared["A"]
        cfg = ExperimentConfig("gcn", "toy", "A", pretrain_epochs=1, inference_epochs=1, repetitions=1)
        run_single(cfg, 0, 9, data)
        rows, labels = seen[0]
        assert rows == data.split.train.size
        np.testing.assert_array_equal(labels, data.bundle.labels[data.split.train])
        assert seen[1][0] == 240


class TestGrid:
    def test_full_enumeration(self):
        configs = enumerate_grid()
        assert len(configs) == 60
        assert len({c.config_id for c in configs}) == 60
        assert sum(c.repetitions for c in configs) == 6000

    def test_single_model_dataset(self):
        assert len(enumerate_grid(datasets=["cora"], models=["gat"])) == 4

    def test_seeds(self):
        c = ExperimentConfig("gcn", "cora", "A", 200)
        assert run_seed(c, 3) == derive_seed(0, "gcn-cora-A-pre200", 3)
        assert run_seed(c, 3) != run_seed(c, 4)
        assert split_seed(c, 0) == split_seed(c, 9)
        assert split_seed(c, 0, True) != split_seed(c, 9, True)
        other = ExperimentConfig("mlp", "cora", "B", 0)
        assert split_seed(c, 0) == split_seed(other, 0)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ExperimentConfig("gcn", "cora", "C")
        with pytest.raises(ValueError):
            ExperimentConfig("gcn", "cora", "A", repetitions=0)

    def test_records_stream_and_failures_continue(self, toy_bundle_dir, tmp_path):
        out = tmp_path / "r.jsonl"
        good = ExperimentConfig("mlp", "toy", "A", 2, 2, 2)
        bad = ExperimentConfig("mlp", "absent", "A", 2, 2, 1)
        written, failed = run_grid([good, bad, good], toy_bundle_dir, out)
        assert (written, failed) == (4, 1)
        recs = read_records(out)
        assert [r.repetition for r in recs] == [0, 1, 0, 1]
        assert recs[0].to_json() == recs[2].to_json()
        line = json.loads(out.read_text().splitlines()[0])
        assert set(line) >= {"config_id", "model", "dataset", "setting", "pretrain_epochs",
                             "repetition", "seed", "accuracies", "wall_ms"}

    def test_worker_count_does_not_change_output(self, toy_bundle_dir, tmp_path):
        configs = enumerate_grid(["toy"], ["A", "B"], ["gcn", "gat"], [0, 3], 2, 2)
        run_grid(configs, toy_bundle_dir, tmp_path / "one.jsonl", workers=1)
        run_grid(configs, toy_bundle_dir, tmp_path / "three.jsonl", workers=3)
        assert (tmp_path / "one.jsonl").read_bytes() == (tmp_path / "three.jsonl").read_bytes()

    def test_malformed_record(self, tmp_path):
        (tmp_path / "x.jsonl").write_text('{"config_id": 1}\n')
        with pytest.raises(ValueError, match="x.jsonl:1"):
            read_records(tmp_path / "x.jsonl")

    def test_record_round_trip(self):
        r = RunRecord("c", "gcn", "cora", "A", 200, 1, 2, [0.1, 0.25], None, [1.0])
        assert RunRecord.from_dict(json.loads(r.to_json())) == r
