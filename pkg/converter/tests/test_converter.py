import json
import shutil
import struct
import subprocess

import numpy as np
import pytest

from waygal_convert.convert import ConversionError, convert
from waygal_convert.cli import main as cli_main

from fabricate import EEG_NAMES, EMG_NAMES, write_h5, write_v5

# weight codes 1/2/4 and surface codes 1/2/3 per the source trial table
CONDITIONS = {
    1: [(1, 3), (4, 3), (2, 1)],
    2: [(4, 2), (1, 1)],
}


def read_binary(path):
    raw = path.read_bytes()
    magic, version, n_channels, n_samples = struct.unpack("<4sIIQ", raw[:20])
    assert magic == b"CMCB" and version == 1
    data = np.frombuffer(raw, dtype="<f4", offset=20)
    return data.reshape(n_channels, n_samples)


@pytest.fixture(scope="module")
def v5_conversion(tmp_path_factory):
    base = tmp_path_factory.mktemp("v5")
    written = write_v5(base / "src", participant=7,
                       series_conditions=CONDITIONS, emg_factor=8, seed=1)
    manifest = convert(7, base / "src", base / "dst")
    return base / "dst", manifest, written


class TestV5Conversion:
    def test_manifest_shape(self, v5_conversion):
        _, manifest, _ = v5_conversion
        assert manifest["kind"] == "waygal"
        assert manifest["subject"] == 7
        assert manifest["fs"] == 500.0
        assert manifest["eeg_channels"] == EEG_NAMES
        assert manifest["emg_channels"] == ["AD", "BR", "FD", "CED", "FDI"]
        assert manifest["source_channel_names"]["emg"] == EMG_NAMES
        assert len(manifest["trials"]) == 5
        assert len(manifest["recordings"]) == 5

    def test_condition_mapping(self, v5_conversion):
        _, manifest, _ = v5_conversion
        got = [(t["weight_g"], t["surface"]) for t in manifest["trials"]]
        assert got == [(165, "silk"), (660, "silk"), (330, "sandpaper"),
                       (660, "suede"), (165, "sandpaper")]

    def test_trial_ids_sequential_and_windows_cover_recordings(
            self, v5_conversion):
        _, manifest, _ = v5_conversion
        assert [t["trial_id"] for t in manifest["trials"]] == list(range(5))
        for trial, rec in zip(manifest["trials"], manifest["recordings"]):
            assert trial["recording"] == rec["id"]
            assert trial["start_s"] == 0.0
            assert trial["end_s"] == rec["n_samples"] / 500.0

    def test_lossless_numeric_transfer_1000_points(self, v5_conversion):
        dst, manifest, written = v5_conversion
        rng = np.random.default_rng(0)
        flat = []
        for (series, arrays), recs in (
                ((1, written[1]), manifest["recordings"][:3]),
                ((2, written[2]), manifest["recordings"][3:])):
            for (eeg, emg), rec in zip(arrays, recs):
                flat.append((eeg, emg, rec))
        checked = 0
        while checked < 1000:
            eeg, emg, rec = flat[rng.integers(len(flat))]
            block = read_binary(dst / rec["file"])
            ch = int(rng.integers(37))
            idx = int(rng.integers(rec["n_samples"]))
            if ch < 32:
                expected = np.float32(eeg[idx, ch])
            else:
                expected = np.float32(emg[idx * 8, ch - 32])  # stride 8
            assert block[ch, idx] == expected
            checked += 1

    def test_emg_stride_preserves_values(self, v5_conversion):
        dst, manifest, written = v5_conversion
        eeg, emg = written[1][0]
        block = read_binary(dst / manifest["recordings"][0]["file"])
        n = manifest["recordings"][0]["n_samples"]
        assert np.array_equal(block[32], emg[::8, 0][:n].astype(np.float32))

    def test_convert_twice_byte_identical(self, tmp_path):
        src = tmp_path / "src"
        write_v5(src, 7, {1: [(1, 3), (4, 1)]}, seed=3)
        convert(7, src, tmp_path / "a")
        convert(7, src, tmp_path / "b")
        for name in sorted(p.name for p in (tmp_path / "a").iterdir()):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()


class TestH5Conversion:
    def test_round_trip(self, tmp_path):
        written = write_h5(tmp_path / "src", participant=3,
                           series_conditions={1: [(2, 2), (1, 3)]},
                           emg_factor=1, seed=2)
        manifest = convert(3, tmp_path / "src", tmp_path / "dst")
        assert manifest["subject"] == 3
        assert manifest["eeg_channels"] == EEG_NAMES
        assert [(t["weight_g"], t["surface"]) for t in manifest["trials"]] \
            == [(330, "suede"), (165, "silk")]
        eeg, emg = written[1][0]
        block = read_binary(tmp_path / "dst" / manifest["recordings"][0]["file"])
        assert np.array_equal(block[:32], eeg.T.astype(np.float32))
        assert np.array_equal(block[32:], emg.T.astype(np.float32))


class TestFailureModes:
    def test_unknown_weight_code(self, tmp_path):
        write_v5(tmp_path / "src", 7, {1: [(3, 1)]})
        with pytest.raises(ConversionError, match="weight code 3"):
            convert(7, tmp_path / "src", tmp_path / "dst")

    def test_unknown_surface_code(self, tmp_path):
        write_v5(tmp_path / "src", 7, {1: [(1, 9)]})
        with pytest.raises(ConversionError, match="surface code 9"):
            convert(7, tmp_path / "src", tmp_path / "dst")

    def test_missing_all_lifts(self, tmp_path):
        write_v5(tmp_path / "src", 7, {1: [(1, 1)]})
        (tmp_path / "src" / "P7_AllLifts.mat").unlink()
        with pytest.raises(ConversionError, match="AllLifts"):
            convert(7, tmp_path / "src", tmp_path / "dst")

    def test_missing_trial_row(self, tmp_path):
        # WS file has two lifts but the trial table only covers the first
        import scipy.io
        from fabricate import make_all_lifts_rows, ALL_COLS
        src = tmp_path / "src"
        write_v5(src, 7, {1: [(1, 1), (4, 3)]})
        table = make_all_lifts_rows(7, {1: [(1, 1)]})
        scipy.io.savemat(src / "P7_AllLifts.mat",
                         {"P": {"AllLifts": table,
                                "ColNames": np.array(ALL_COLS, dtype=object)}})
        with pytest.raises(ConversionError, match="lift 2"):
            convert(7, src, tmp_path / "dst")

    def test_non_integer_rate_ratio_rejected(self, tmp_path):
        import scipy.io
        src = tmp_path / "src"
        write_v5(src, 7, {1: [(1, 1)]})
        raw = scipy.io.loadmat(src / "WS_P7_S1.mat", squeeze_me=False,
                               struct_as_record=True)
        # emg_t at 750 Hz: not an integer multiple of 500
        win = raw["ws"]["win"][0, 0]
        n = win["emg"][0, 0].shape[0]
        win["emg_t"][0, 0] = np.arange(n) / 750.0
        scipy.io.savemat(src / "WS_P7_S1.mat", {"ws": raw["ws"]})
        with pytest.raises(ConversionError, match="integer multiple"):
            convert(7, src, tmp_path / "dst")

    def test_no_series_files(self, tmp_path):
        write_v5(tmp_path / "src", 7, {1: [(1, 1)]})
        (tmp_path / "src" / "WS_P7_S1.mat").unlink()
        with pytest.raises(ConversionError, match="WS_P7"):
            convert(7, tmp_path / "src", tmp_path / "dst")


class TestCli:
    def test_cli_converts(self, tmp_path, capsys):
        write_v5(tmp_path / "src", 7, {1: [(1, 3), (4, 3)]})
        code = cli_main(["--participant", "7", "--src", str(tmp_path / "src"),
                         "--dst", str(tmp_path / "dst")])
        assert code == 0
        out = capsys.readouterr().out
        assert "converted 2 trials" in out
        assert (tmp_path / "dst" / "manifest.json").is_file()

    def test_cli_reports_errors(self, tmp_path, capsys):
        code = cli_main(["--participant", "7", "--src", str(tmp_path),
                         "--dst", str(tmp_path / "dst")])
        assert code == 1
        assert "error:" in capsys.readouterr().err


@pytest.mark.skipif(shutil.which("cmcgrasp") is None,
                    reason="cmcgrasp CLI not installed")
class TestAgainstAnalysisPackage:
    def test_output_passes_dataset_validation(self, v5_conversion):
        dst, _, _ = v5_conversion
        proc = subprocess.run(["cmcgrasp", "validate-dataset",
                               "--dataset", str(dst)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stdout + proc.stderr
        assert "dataset ok" in proc.stdout

    def test_converted_data_flows_through_classification(self, tmp_path):
        # 6 s windows with a gated EMG contraction, 8 lifts per weight class
        conds = {1: [(1, 3)] * 4 + [(4, 3)] * 4,
                 2: [(1, 3)] * 4 + [(4, 3)] * 4}
        write_v5(tmp_path / "src", 7, conds, n_eeg_samples=3000,
                 emg_factor=2, seed=5, burst=(1.0, 5.0))
        convert(7, tmp_path / "src", tmp_path / "dst")
        proc = subprocess.run(
            ["cmcgrasp", "classify", "--dataset", str(tmp_path / "dst"),
             "--out", str(tmp_path / "out"), "--durations", "1",
             "--kernels", "linear", "--cv-folds", "3", "--cv-reps", "1"],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stdout + proc.stderr
        report = (tmp_path / "out" / "report.csv").read_text().strip()
        lines = report.split("\n")
        assert lines[0] == "task,muscles,dur_s,kernel,fold,accuracy"
        assert len(lines) > 1
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        muscles = {c["muscles"] for c in summary["cells"]}
        assert "AD+BR+CED+FD+FDI" in muscles
