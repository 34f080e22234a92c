import json

import numpy as np
import pytest

from cdtriplet.classifier import ConfusionMatrix
from cdtriplet.exceptions import ConfigError, InputError
from cdtriplet.experiments import (ExperimentConfig, StageError, dumps_report, load_domains, metrics, prepare_splits,
                                   run_experiment, run_suite)

QUICK = {"train": {"epochs": 2, "triplets_per_epoch": 20, "batch_size": 10},
         "data": {"per_class": 24}, "test_per_class": 5, "n_pos": 5, "n_neg": 5}


def quick(**kw):
    return ExperimentConfig.from_dict({**QUICK, **kw})


def test_metrics_figure_example():
    m = metrics(ConfusionMatrix(tp=40, fn=0, tn=38, fp=2))
    assert m["precision"] == pytest.approx(0.952, abs=1e-3)
    assert m["recall"] == 1.0
    assert m["fp_rate"] == pytest.approx(0.05)


def test_metrics_fp_rate_example():
    assert metrics(ConfusionMatrix(40, 0, 31, 9))["fp_rate"] == pytest.approx(0.225)


def test_metrics_perfect():
    m = metrics(ConfusionMatrix(40, 0, 40, 0))
    assert m["precision"] == 1 and m["recall"] == 1 and m["fp_rate"] == 0


def test_metrics_zero_denominators_are_undefined():
    m = metrics(ConfusionMatrix(0, 0, 5, 0))
    assert m["precision"] is None and m["recall"] is None and m["fp_rate"] == 0
    assert metrics(ConfusionMatrix(3, 1, 0, 0))["fp_rate"] is None


def test_mode_fixes_loss_variant():
    assert quick(mode="ours").train.loss.variant == "modified"
    assert quick(mode="bench1").train.loss.variant == "basic"
    cfg = ExperimentConfig.from_dict({"mode": "bench2", "train": {"loss": {"variant": "modified"}}})
    assert cfg.train.loss.variant == "basic"


def test_seed_flows_into_training_and_init():
    cfg = quick(seed=7)
    assert cfg.train.seed == 7 and cfg.encoder.seed == 7


def test_config_round_trip_and_errors():
    cfg = quick(mode="bench1", seed=3)
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"modes": "ours"})
    with pytest.raises(ConfigError):
        quick(mode="bench9")


def test_splits_are_disjoint_and_target_defects_stay_out_of_training():
    cfg = quick()
    source, target = load_domains(cfg)
    sp = prepare_splits(cfg, source, target)
    assert set(sp.target_train.labels) == {"noDefect"}
    assert len(sp.test_images) == 10 and sp.test_labels.count("defect") == 5
    test_keys = {img.tobytes() for img in sp.test_images}
    assert not test_keys & {img.tobytes() for img in sp.positive_refs}
    assert not test_keys & {img.tobytes() for img in sp.target_train.images}


def test_source_positive_references():
    cfg = quick(positive_source="source")
    source, target = load_domains(cfg)
    sp = prepare_splits(cfg, source, target)
    source_test = {img.tobytes() for img in source.images}
    assert all(img.tobytes() in source_test for img in sp.positive_refs)


def test_too_few_test_images():
    cfg = quick(test_per_class=50)
    with pytest.raises(StageError, match=r"\[split\]"):
        run_experiment(cfg)


def check_report(report, cfg):
    assert report["schema_version"] == 1
    assert report["mode"] == cfg.mode and report["seed"] == cfg.seed
    c = report["counts"]
    assert c["tp"] + c["fn"] == cfg.test_per_class and c["tn"] + c["fp"] == cfg.test_per_class
    r = report["rates"]
    assert r["tp"] + r["fn"] == pytest.approx(1) and r["tn"] + r["fp"] == pytest.approx(1)
    assert report["loss_variant"] == ("modified" if cfg.mode == "ours" else "basic")
    assert report["fidelity"] == "ordering"
    for key in ("precision", "recall", "config_echo", "runtime_s"):
        assert key in report


@pytest.mark.parametrize("mode", ["ours", "bench1", "bench2"])
def test_report_structure(mode):
    cfg = quick(mode=mode)
    check_report(run_experiment(cfg).report, cfg)


def test_zero_learning_rate_bench2_still_well_formed():
    cfg = ExperimentConfig.from_dict({**QUICK, "mode": "bench2",
                                      "train": {**QUICK["train"], "optimizer": {"learning_rate": 0.0}}})
    result = run_experiment(cfg)
    check_report(result.report, cfg)


def test_report_reproducible_except_runtime():
    a = run_experiment(quick(seed=4))
    b = run_experiment(quick(seed=4))
    ra, rb = dict(a.report), dict(b.report)
    ra.pop("runtime_s")
    rb.pop("runtime_s")
    assert dumps_report(ra) == dumps_report(rb)
    assert a.model.to_bytes() == b.model.to_bytes()


def test_suite_shape():
    summary = run_suite(quick(), seeds=[0, 1], modes=["ours", "bench1"])
    assert len(summary["runs"]) == 4
    assert set(summary["per_mode"]) == {"ours", "bench1"}
    fp = summary["per_mode"]["ours"]["fp"]
    assert fp["min"] <= fp["mean"] <= fp["max"]
    assert summary["fp_ordering_holds"] is None  # bench2 missing


def test_suite_single_seed_wraps_run_experiment():
    summary = run_suite(quick(), seeds=[2], modes=["ours"])
    single = run_experiment(quick(seed=2)).report
    assert summary["runs"][0]["counts"] == single["counts"]


def test_suite_needs_seeds():
    with pytest.raises(InputError):
        run_suite(quick(), seeds=[])


def test_data_dir_errors_carry_stage(tmp_path):
    with pytest.raises(StageError, match=r"\[data\]"):
        run_experiment(quick(data_dir=str(tmp_path)))
