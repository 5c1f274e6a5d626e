import json

import numpy as np
import pytest

from mtsfm.cli import (EXIT_CONFIG, EXIT_IO, EXIT_NOT_CONVERGED, EXIT_OK, RECIPES,
                       ConfigError, config_hash, main, resolve_config)


def write_config(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    header = lines[1].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
    return header, data


def tree_bytes(root):
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


SMALL_SYNTH = {"mode": "Synth", "seed": 4,
               "waveform": {"num_harmonics": 4, "tbp": 20.0},
               "analysis": {"doppler_span": 4.0, "doppler_step": 1.0, "af_delay_stride": 16}}


def test_synth_writes_stamped_files(tmp_path):
    out = tmp_path / "out"
    assert main(["--config", write_config(tmp_path, SMALL_SYNTH), "--out", str(out)]) == EXIT_OK
    names = {p.name for p in out.iterdir()}
    assert names == {"samples.csv", "spectrogram.txt", "eds.csv", "acf.csv", "af.txt",
                     "metrics.json"}
    h = config_hash(resolve_config(SMALL_SYNTH))
    for p in out.iterdir():
        assert f"config_hash={h}" in p.read_text() or json.loads(p.read_text())["config_hash"] == h
    header, data = read_csv(out / "acf.csv")
    assert header == ["tau_s", "tau_over_T", "acf_db"]
    assert np.all(np.diff(data[:, 0]) > 0)
    assert data[:, 2].min() >= -100.0
    first = (out / "af.txt").read_text().splitlines()[0]
    assert "rows=9" in first and first.startswith("#")


def test_unmodulated_synth_gives_sinc_eds(tmp_path):
    cfg = {"mode": "Synth", "waveform": {"indices": [0.0]},
           "analysis": {"af_delay_stride": 64, "doppler_span": 2.0, "doppler_step": 1.0}}
    out = tmp_path / "o"
    assert main(["--config", write_config(tmp_path, cfg), "--out", str(out)]) == EXIT_OK
    _, eds = read_csv(out / "eds.csv")
    f = eds[:, 0]
    near = np.abs(f) <= 3.0
    ref = 10 * np.log10(np.maximum(np.sinc(f[near]) ** 2, 1e-10))
    hi = ref > -40
    assert np.max(np.abs(eds[near, 1][hi] - ref[hi])) < 0.05


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, SMALL_SYNTH)
    main(["--config", cfg, "--out", str(tmp_path / "a")])
    main(["--config", cfg, "--out", str(tmp_path / "b")])
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_analyze_family_report(tmp_path):
    cfg = {"mode": "Analyze", "seed": 2, "waveform": {"num_harmonics": 4, "tbp": 25.0},
           "family": {"members": 2},
           "analysis": {"doppler_span": 2.0, "doppler_step": 1.0, "af_delay_stride": 32}}
    out = tmp_path / "o"
    assert main(["--config", write_config(tmp_path, cfg), "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "metrics.json").read_text())
    assert len(rep["members"]) == 2 and len(rep["pairs"]) == 1
    assert rep["pairs"][0]["ccf_area"] > 0
    assert all(m["beta_sq_rms"] > 0 for m in rep["members"])
    assert rep["closed_form_max_diff"] <= 1e-3
    header, _ = read_csv(out / "acf_1.csv")
    assert header == ["tau_s", "tau_over_T", "acf_db", "acf_closed_db"]
    assert (out / "ccf_12.csv").exists()


def test_analyze_cw_has_zero_isr(tmp_path):
    cfg = {"mode": "Analyze", "waveform": {"indices": [0.0]},
           "analysis": {"doppler_span": 1.0, "doppler_step": 1.0, "af_delay_stride": 64}}
    out = tmp_path / "o"
    assert main(["--config", write_config(tmp_path, cfg), "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "metrics.json").read_text())
    assert rep["members"][0]["isr"] == 0.0
    _, acf = read_csv(out / "acf_1.csv")
    tri = 20 * np.log10(np.maximum(1 - np.abs(acf[:, 1]), 1e-5))
    assert np.max(np.abs(acf[:-1, 2][1:] - tri[:-1][1:])) < 1e-6


@pytest.mark.parametrize("cfg, where", [
    ({"mode": "Synth", "waveform": {"indices": [1.0]}, "colour": 1}, "$"),
    ({"mode": "Synth", "waveform": {"indices": [1.0], "taper": {"kind": "hann"}}},
     "$.waveform.taper.kind"),
    ({"mode": "Fly"}, "$.mode"),
    ({"mode": "Synth", "waveform": {"duration": -1, "indices": [1.0]}}, "$.waveform.duration"),
])
def test_config_errors_name_the_key(tmp_path, capsys, cfg, where):
    assert main(["--config", write_config(tmp_path, cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert where in err and "schema path" in err


def test_custom_weights_need_vectors():
    with pytest.raises(ConfigError):
        resolve_config({"mode": "OptimizeFamily",
                        "waveform": {"num_harmonics": 4, "tbp": 20.0},
                        "family": {"weights": "custom"}})


def test_missing_config_is_io_error(tmp_path):
    assert main(["--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_IO


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    rc = main(["--config", write_config(tmp_path, SMALL_SYNTH), "--out", str(blocker / "sub")])
    assert rc == EXIT_IO


def _family_cfg(max_iter):
    return {"mode": "OptimizeFamily", "seed": 3,
            "waveform": {"num_harmonics": 8, "tbp": 30.0},
            "family": {"members": 2, "max_iter": max_iter}}


def test_optimize_outputs_and_nonconverged_exit(tmp_path):
    out = tmp_path / "o"
    rc = main(["--config", write_config(tmp_path, _family_cfg(2)), "--out", str(out),
               "--weights", "ccf-heavy"])
    assert rc == EXIT_NOT_CONVERGED
    names = {p.name for p in out.iterdir()}
    assert names == {"coefficients_initial.csv", "coefficients_final.csv", "trace.csv",
                     "curves_initial.csv", "curves_final.csv", "summary.json"}
    summary = json.loads((out / "summary.json").read_text())
    assert summary["weight_case"] == "ccf-heavy"
    assert summary["converged"] is False
    assert summary["objective_final"] < 1.0
    header, trace = read_csv(out / "trace.csv")
    assert header[:2] == ["iteration", "objective"]
    assert trace[0, 1] == pytest.approx(1.0, rel=1e-12)
    header, _ = read_csv(out / "curves_final.csv")
    assert header == ["tau_s", "tau_over_T", "acf_1_db", "acf_2_db", "ccf_12_db"]


def test_optimize_threads_byte_identical(tmp_path):
    cfg = write_config(tmp_path, _family_cfg(4))
    main(["--config", cfg, "--out", str(tmp_path / "a"), "--threads", "1"])
    main(["--config", cfg, "--out", str(tmp_path / "b"), "--threads", "2"])
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_recipes_are_valid():
    for name, cfg in RECIPES.items():
        resolved = resolve_config(cfg)
        assert resolved["waveform"]["tbp"] == 100.0
        assert resolved["waveform"]["taper"] == {"kind": "tukey", "alpha": 0.05}
    assert RECIPES["fig1"]["waveform"]["num_harmonics"] == 16
    assert {RECIPES[f]["family"]["weights"] for f in ("fig2", "fig3", "fig4")} == \
        {"equal", "ccf-heavy", "acf-heavy"}
