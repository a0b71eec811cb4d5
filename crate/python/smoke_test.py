"""Smoke test for the rnnfc extension module.

Build and install first:

    pip install maturin
    pip install --no-build-isolation -e crates/python
"""

import json
import pathlib

import rnnfc

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURE = ROOT / "fixtures" / "btc_usd_daily.csv"


def main():
    assert rnnfc.lstm_param_count(2, 1) == 47
    assert rnnfc.gru_param_count(2, 1) == 21
    for kind in ("lstm", "gru"):
        err = rnnfc.gradient_check(kind, 1, 3, 2, 5)
        assert err < 1e-4, (kind, err)

    params = rnnfc.Params.init("gru", 4, 1, 42)
    again = rnnfc.Params.from_json(params.to_json())
    xs = [[0.1], [0.2], [0.3]]
    assert params.predict(xs) == again.predict(xs)

    try:
        rnnfc.TrainConfig(hiddensize=8)
    except ValueError as e:
        assert "hidden_size" in str(e)
    else:
        raise AssertionError("unknown key accepted")

    series, report = rnnfc.load_csv(str(FIXTURE))
    assert len(series) == report["rows"] == 2654
    assert (series.first_date, series.last_date) == ("2015-12-31", "2023-04-06")

    config = rnnfc.TrainConfig(hidden_size=6, window_len=10, epochs=2, k_folds=3, seed=3)
    model, metrics = rnnfc.train(config, series)
    assert metrics["cell_kind"] == "lstm"
    assert len(metrics["fold_metrics"]) == 3
    curve = model.loss_curve()
    assert len(curve["train"]) == len(curve["validation"]) == 2
    date, value = model.predict_next(series, last_window_only=True)[0]
    assert date == "2023-04-07" and value > 0
    restored = rnnfc.TrainedModel.from_json(model.to_json())
    assert restored.predict_next(series, True) == model.predict_next(series, True)

    report = rnnfc.compare(config, series)
    assert report["mse_winner"] in ("lstm", "gru")
    assert report["speed_ratio"] > 0
    print(json.dumps({
        "lstm_test_mse": report["lstm"]["test_mse"],
        "gru_test_mse": report["gru"]["test_mse"],
        "speed_ratio": report["speed_ratio"],
    }))
    print("smoke test passed")


if __name__ == "__main__":
    main()
