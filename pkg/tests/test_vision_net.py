"""Network math: forward/backward checks, checkpoints, training, reports."""
import numpy as np
import pytest

from aerogreen.telemetry import Broker
from aerogreen.vision import (
    ConvNet,
    DatasetSplit,
    TrainConfig,
    TrainingError,
    classify_and_publish,
    evaluate,
    gradient_check,
    generate_synthetic_leaf,
    load_model,
    plan_capture_sessions,
    render_report,
    save_model,
    synthetic_dataset,
    train,
)
from aerogreen.vision.net import ModelError, _pool_forward, softmax, to_input
from aerogreen.vision.training import batch_arrays


def small_net(seed=0):
    # full pipeline shape, few parameters: fast enough to train in tests
    return ConvNet(seed=seed, channels=(2, 3, 4), hidden=8)


@pytest.fixture(scope="module")
def leaves():
    return synthetic_dataset(12, seed=21)


# --------------------------- forward path ----------------------------------

def test_zero_weights_give_uniform_probabilities(leaves):
    model = small_net()
    for name in model.params:
        model.params[name][...] = 0.0
    label, probs = model.predict(leaves[0].pixels)
    assert np.allclose(probs, [1 / 3, 1 / 3, 1 / 3])
    assert label == "healthy"  # tie resolves to the lowest class index


def test_probabilities_normalize(leaves):
    model = small_net(seed=5)
    x, _ = batch_arrays(leaves, model.classes)
    probs = model.predict_batch(x)
    assert np.all(probs > 0)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_prediction_invariant_under_logit_shift():
    logits = np.array([[0.4, -1.2, 0.4], [3.0, 2.0, 1.0]])
    shifted = softmax(logits + 17.5)
    assert np.allclose(softmax(logits), shifted, atol=1e-12)
    assert list(shifted.argmax(axis=1)) == [0, 0]


def test_batch_shape_mismatch_rejected(leaves):
    model = small_net()
    with pytest.raises(ModelError):
        model.forward(np.zeros((1, 3, 32, 32)))
    with pytest.raises(ModelError):
        ConvNet(input_shape=(3, 60, 60))  # not divisible by pooling factor


def test_pooling_breaks_ties_toward_first_element():
    x = np.ones((1, 1, 2, 2))
    out, (idx, _) = _pool_forward(x)
    assert out[0, 0, 0, 0] == 1.0
    assert idx[0, 0, 0, 0] == 0


# --------------------------- gradients -------------------------------------

class LinearModel:
    """y = xw + b under squared loss; gradient is exact for quadratics."""

    def __init__(self, rng):
        self.params = {"w": rng.normal(size=(5, 2)), "b": rng.normal(size=2)}
        self.target = rng.normal(size=(4, 2))

    def loss_and_grads(self, x, labels):
        pred = x @ self.params["w"] + self.params["b"]
        diff = pred - self.target
        loss = 0.5 * float((diff * diff).mean())
        scale = 1.0 / diff.size
        return loss, {
            "w": x.T @ diff * scale,
            "b": diff.sum(axis=0) * scale,
        }


def test_gradient_check_exact_for_linear_squared_loss():
    rng = np.random.default_rng(3)
    model = LinearModel(rng)
    x = rng.normal(size=(4, 5))
    err = gradient_check(model, x, np.zeros(4, dtype=int), samples=12)
    assert err < 1e-8


def test_gradient_check_on_default_net(leaves):
    model = ConvNet(seed=2)
    x, y = batch_arrays(leaves[:4], model.classes)
    assert gradient_check(model, x, y, epsilon=1e-4, samples=200) < 1e-4


class CorruptedGradients:
    """Scales one layer's gradient by 1.01, leaving the loss intact."""

    def __init__(self, inner):
        self.inner = inner
        self.params = inner.params
        self.loss_with_signature = inner.loss_with_signature

    def loss_and_grads(self, x, labels):
        loss, grads = self.inner.loss_and_grads(x, labels)
        grads = dict(grads)
        grads["fc1_w"] = grads["fc1_w"] * 1.01
        return loss, grads


def test_gradient_check_catches_corruption(leaves):
    model = ConvNet(seed=2)
    x, y = batch_arrays(leaves[:4], model.classes)
    err = gradient_check(CorruptedGradients(model), x, y, samples=200)
    assert err > 1e-3


# --------------------------- checkpoints -----------------------------------

def test_checkpoint_roundtrip_is_bit_exact(tmp_path, leaves):
    model = small_net(seed=9)
    path = tmp_path / "model.npz"
    save_model(model, path)
    clone = load_model(path)
    assert clone.channels == model.channels
    assert clone.classes == model.classes
    for name, tensor in model.params.items():
        assert np.array_equal(clone.params[name], tensor)
    x, _ = batch_arrays(leaves[:2], model.classes)
    assert np.array_equal(clone.forward(x), model.forward(x))


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "junk.npz"
    np.savez(open(path, "wb"), stuff=np.arange(3))
    with pytest.raises(ModelError):
        load_model(path)
    with pytest.raises(ModelError):
        load_model(tmp_path / "missing.npz")


# --------------------------- training --------------------------------------

def as_split(images, train_n, val_n):
    return DatasetSplit(
        train=images[:train_n],
        val=images[train_n : train_n + val_n],
        test=images[train_n + val_n :],
    )


def test_zero_learning_rate_changes_nothing(leaves):
    model = small_net(seed=4)
    before = {k: v.copy() for k, v in model.params.items()}
    cfg = TrainConfig(epochs=3, learning_rate=0.0, batch_size=4, seed=0)
    train(model, as_split(leaves, 9, 3), cfg)
    for name, tensor in model.params.items():
        assert np.array_equal(tensor, before[name])


def test_single_sample_overfits_within_50_epochs():
    img = generate_synthetic_leaf("drought", 50)
    model = small_net(seed=6)
    cfg = TrainConfig(epochs=50, learning_rate=0.01, batch_size=1, seed=0)
    _, curve, _ = train(model, DatasetSplit([img], [], []), cfg)
    assert curve[-1] == 1.0


def test_frozen_backbone_stays_bit_identical(leaves):
    model = small_net(seed=7)
    before = {k: v.copy() for k, v in model.params.items()}
    cfg = TrainConfig(epochs=2, learning_rate=0.01, batch_size=4,
                      freeze_backbone_epochs=2, seed=1)
    train(model, as_split(leaves, 9, 3), cfg)
    for name in model.backbone_names:
        assert np.array_equal(model.params[name], before[name])
    assert not np.array_equal(model.params["fc2_w"], before["fc2_w"])


def test_training_is_bitwise_deterministic(leaves):
    runs = []
    for _ in range(2):
        model = small_net(seed=8)
        cfg = TrainConfig(epochs=2, learning_rate=0.01, batch_size=4, seed=5)
        _, tc, vc = train(model, as_split(leaves, 9, 3), cfg)
        runs.append((model.params, tc, vc))
    for name in runs[0][0]:
        assert np.array_equal(runs[0][0][name], runs[1][0][name])
    assert runs[0][1:] == runs[1][1:]


def test_diverging_loss_aborts_with_diagnostics(leaves):
    model = small_net(seed=3)
    # saturate the head so the very first forward overflows to non-finite
    model.params["fc1_w"][...] = 1e308
    model.params["fc2_w"][...] = 1e308
    cfg = TrainConfig(epochs=1, learning_rate=0.01, batch_size=4, seed=0)
    with pytest.raises(TrainingError) as err:
        with np.errstate(all="ignore"):
            train(model, as_split(leaves, 9, 3), cfg)
    assert (err.value.epoch, err.value.batch) == (0, 0)
    assert "grad norm" in str(err.value)


def test_train_config_validation():
    for bad in (
        {"epochs": -1},
        {"learning_rate": -0.1},
        {"momentum": 1.0},
        {"batch_size": 0},
        {"freeze_backbone_epochs": -2},
    ):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


# --------------------------- evaluation ------------------------------------

class ScriptedModel:
    """Returns a fixed prediction per image, in feed order."""

    classes = ("healthy", "drought", "rust")
    input_shape = (3, 4, 4)

    def __init__(self, predictions):
        self.predictions = list(predictions)
        self.cursor = 0

    def forward(self, x):
        take = self.predictions[self.cursor : self.cursor + len(x)]
        self.cursor += len(x)
        logits = np.zeros((len(x), 3))
        logits[np.arange(len(x)), take] = 5.0
        return logits


def plain(label, n):
    from aerogreen.vision import LabeledImage

    return [
        LabeledImage(f"{label}/{i}", label, np.zeros((4, 4, 3), dtype=np.uint8))
        for i in range(n)
    ]


def test_evaluate_matches_hand_counted_confusion():
    # true classes: 10 healthy, 10 drought, 10 rust in order
    images = plain("healthy", 10) + plain("drought", 10) + plain("rust", 10)
    predictions = (
        [0] * 8 + [1, 2]          # healthy row: 8 right, 1 drought, 1 rust
        + [0, 0] + [1] * 7 + [2]  # drought row: 2 healthy, 7 right, 1 rust
        + [1] + [2] * 9           # rust row: 1 drought, 9 right
    )
    report = evaluate(ScriptedModel(predictions), images)
    assert report.confusion == ((8, 1, 1), (2, 7, 1), (0, 1, 9))
    assert report.per_class_recall == (0.8, 0.7, 0.9)
    assert report.total_accuracy == 0.8
    assert [sum(row) for row in report.confusion] == [10, 10, 10]


def test_evaluate_degenerate_constant_classifier():
    images = plain("healthy", 5) + plain("drought", 5) + plain("rust", 5)
    report = evaluate(ScriptedModel([0] * 15), images)
    assert report.total_accuracy == pytest.approx(1 / 3)
    assert report.per_class_recall == (1.0, 0.0, 0.0)


def test_evaluate_perfect_classifier():
    images = plain("healthy", 4) + plain("drought", 4) + plain("rust", 4)
    report = evaluate(ScriptedModel([0] * 4 + [1] * 4 + [2] * 4), images)
    assert report.total_accuracy == 1.0
    assert report.per_class_recall == (1.0, 1.0, 1.0)
    assert report.confusion == ((4, 0, 0), (0, 4, 0), (0, 0, 4))
    with pytest.raises(ValueError):
        evaluate(ScriptedModel([]), [])


def test_report_renders_and_serializes(tmp_path):
    images = plain("healthy", 2) + plain("drought", 2) + plain("rust", 2)
    report = evaluate(ScriptedModel([0, 0, 1, 1, 2, 2]), images)
    text = render_report(report)
    assert "healthy" in text and "100.00%" in text
    out = tmp_path / "report.json"
    report.save(out)
    import json

    doc = json.loads(out.read_text())
    assert doc["total_accuracy"] == 1.0
    assert doc["confusion"][0] == [2, 0, 0]


# --------------------------- session planning ------------------------------

def test_capture_plan_arithmetic():
    plan = plan_capture_sessions(20, 40, 4, 133)
    assert plan.days == (20, 24, 28, 32, 36, 40)
    assert plan.total_images == 798
    assert plan_capture_sessions(20, 20, 4, 133).total_images == 133
    assert plan_capture_sessions(20, 40, 4, 144).total_images == 864


def test_capture_plan_validation():
    with pytest.raises(ValueError):
        plan_capture_sessions(40, 20, 4, 10)
    with pytest.raises(ValueError):
        plan_capture_sessions(0, 10, 0, 10)
    with pytest.raises(ValueError):
        plan_capture_sessions(0, 10, 4, -1)


# --------------------------- publishing ------------------------------------

class OneShotModel:
    classes = ("healthy", "drought", "rust")

    def __init__(self, labels_probs):
        self.calls = list(labels_probs)
        self.cursor = 0

    def predict(self, pixels):
        label, p = self.calls[self.cursor]
        self.cursor += 1
        probs = np.full(3, (1 - p) / 2)
        probs[self.classes.index(label)] = p
        return label, probs


def test_classify_and_publish_raises_one_alert():
    broker = Broker()
    alerts = []
    model = OneShotModel([("healthy", 0.97), ("rust", 0.95), ("healthy", 0.9)])
    images = plain("healthy", 3)
    calls = classify_and_publish(model, images, broker, 120.0,
                                 alert_sink=lambda *a: alerts.append(a))
    assert [c.alerted for c in calls] == [False, True, False]
    assert alerts == [("plant1", "rust", 0.95)]
    frame = broker.retained("gh/plant1/disease")
    assert '"label": "rust"' in frame["v"]


def test_classify_below_threshold_publishes_without_alert():
    broker = Broker()
    alerts = []
    model = OneShotModel([("rust", 0.5)])
    classify_and_publish(model, plain("healthy", 1), broker, 0.0,
                         alert_sink=lambda *a: alerts.append(a))
    assert alerts == []
    assert broker.retained("gh/plant0/disease") is not None


def test_classify_retries_failed_publishes():
    class FlakyBroker(Broker):
        def __init__(self):
            super().__init__()
            self.failures = 1

        def publish(self, *args, **kwargs):
            if self.failures:
                self.failures -= 1
                raise OSError("telemetry down")
            return super().publish(*args, **kwargs)

    broker = FlakyBroker()
    model = OneShotModel([("healthy", 0.9)])
    calls = classify_and_publish(model, plain("healthy", 1), broker, 0.0)
    assert calls[0].delivered is True
    assert broker.retained("gh/plant0/disease") is not None
