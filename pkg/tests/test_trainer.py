import statistics

import numpy as np
import pytest

from conftest import acceptance_hdr, synthetic_hdr
from fcmtone import exposure as exp
from fcmtone.errors import ConfigError
from fcmtone.trainer import TrainConfig, ablation_inputs, learning_rate, train
from fcmtone.vgg import ConvLayer, VggWeights, random_weights


@pytest.fixture(scope="module")
def weights():
    return random_weights(2024)


def tiny_cfg(**kw):
    defaults = dict(epochs=3, seed=7)
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.epochs == 400 and cfg.lr0 == 2e-4 and cfg.decay == 0.9
        assert cfg.loss_mode == "fcm" and cfg.input_mode == "mef"

    @pytest.mark.parametrize(
        "kw",
        [
            dict(epochs=0),
            dict(lr0=0.0),
            dict(decay=0.0),
            dict(decay=1.5),
            dict(loss_mode="l2"),
            dict(input_mode="dual"),
        ],
    )
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)


class TestSchedule:
    def test_epoch_35(self):
        cfg = TrainConfig()
        assert abs(learning_rate(cfg, 35) - 2e-4 * 0.9**3) < 1e-12

    def test_first_decade_flat(self):
        cfg = TrainConfig()
        assert learning_rate(cfg, 0) == 2e-4
        assert learning_rate(cfg, 9) == 2e-4
        assert learning_rate(cfg, 10) == pytest.approx(1.8e-4)


class TestAblationInputs:
    def test_mef_passthrough(self, small_hdr):
        norm = exp.normalize(small_hdr)
        tensors, stops = ablation_inputs(norm, "mef")
        eset = exp.make_exposure_set(norm)
        assert stops == (eset.e_low, eset.e_mid, eset.e_high)
        for t, img in zip(tensors, eset.images):
            np.testing.assert_array_equal(t, img.data.transpose(2, 0, 1))

    def test_single_linear_clips(self, small_hdr):
        norm = exp.normalize(small_hdr)
        norm.image.data[0, 0, 0] = 2.0
        tensors, stops = ablation_inputs(norm, "single-linear")
        assert stops is None
        assert tensors[0][0, 0, 0] == 1.0
        np.testing.assert_array_equal(tensors[0], tensors[1])

    def test_single_log_maps_max_to_one(self, small_hdr):
        norm = exp.normalize(small_hdr)
        tensors, _ = ablation_inputs(norm, "single-log")
        assert tensors[0].max() == pytest.approx(1.0, abs=1e-7)
        assert tensors[0].min() >= 0.0


class TestTrain:
    def test_single_epoch_output_in_unit_interval(self, small_hdr, weights):
        out, report = train(small_hdr, tiny_cfg(epochs=1), weights)
        assert (out.data > 0).all() and (out.data < 1).all()
        assert len(report.loss_trace) == 1
        assert report.final_loss > 0

    def test_deterministic_per_seed(self, small_hdr, weights):
        out1, rep1 = train(small_hdr, tiny_cfg(), weights)
        out2, rep2 = train(small_hdr, tiny_cfg(), weights)
        assert (out1.data == out2.data).all()
        assert rep1.loss_trace == rep2.loss_trace
        out3, _ = train(small_hdr, tiny_cfg(seed=8), weights)
        assert not (out1.data == out3.data).all()

    def test_report_contents(self, small_hdr, weights):
        _, report = train(small_hdr, tiny_cfg(), weights)
        assert report.mu == pytest.approx(
            exp.adaptive_mu(exp.normalize(small_hdr).median_intensity)
        )
        assert report.exposures is not None
        assert report.seconds > 0
        assert not report.diverged

    def test_guidance_cache_is_pure_optimization(self, small_hdr, weights):
        _, rep_cached = train(small_hdr, tiny_cfg(), weights)
        _, rep_fresh = train(small_hdr, tiny_cfg(cache_guidance=False), weights)
        assert rep_cached.loss_trace == rep_fresh.loss_trace

    def test_loss_modes_differ(self, small_hdr, weights):
        out_fcm, _ = train(small_hdr, tiny_cfg(), weights)
        out_vgg, _ = train(small_hdr, tiny_cfg(loss_mode="plain-vgg"), weights)
        assert not (out_fcm.data == out_vgg.data).all()

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts_with_partial_report(self, small_hdr):
        layers = random_weights(1).layers
        huge = [
            ConvLayer(l.name, (l.weights * np.float32(1e30)).astype(np.float32), l.bias)
            for l in layers
        ]
        out, report = train(small_hdr, tiny_cfg(epochs=5), VggWeights(layers=huge))
        assert report.diverged
        assert len(report.loss_trace) < 5
        assert np.isfinite(out.data).all()

    def test_loss_decreases_on_synthetic(self, weights):
        src = acceptance_hdr(32)
        _, report = train(src, TrainConfig(epochs=40, seed=7), weights)
        assert report.final_loss < report.loss_trace[0]
        first = statistics.median(report.loss_trace[:10])
        last = statistics.median(report.loss_trace[-10:])
        assert last < first

    def test_divergence_flag_iff_nan(self, small_hdr, weights):
        _, report = train(small_hdr, tiny_cfg(), weights)
        assert not report.diverged
        assert all(np.isfinite(v) for v in report.loss_trace)


@pytest.mark.slow
def test_long_run_median_trend(weights):
    # Full-schedule check: median loss over the last 50 epochs sits below the
    # median over the first 50.
    src = acceptance_hdr(48)
    _, report = train(src, TrainConfig(epochs=400, seed=7), weights)
    assert statistics.median(report.loss_trace[350:]) < statistics.median(
        report.loss_trace[:50]
    )
