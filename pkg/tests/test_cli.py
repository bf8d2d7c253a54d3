"""Command-line interface: config resolution, outputs, determinism."""

import json
import math

import numpy as np
import pytest

from liouvdyn import __version__
from liouvdyn.cli import main
from liouvdyn.config import RunConfig, load_config_file, resolve_config
from liouvdyn.errors import ConfigInvalid


def run_cli(args):
    return main([str(a) for a in args])


def write_json(path, payload):
    path.write_text(json.dumps(payload))
    return path


def read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    rows = [[float(x) for x in line.split(",")] for line in lines[1:]]
    return header, rows


class TestConfigResolution:
    def test_defaults_need_no_file(self):
        cfg = resolve_config("sweep")
        assert cfg.experiment == "sweep"
        assert cfg.model["kind"] == "ho"
        assert cfg.protocol["omega_start"] == 20.0
        assert cfg.protocol["omega_target"] == 10.0
        assert cfg.protocol["acceleration"] == -5e-3
        assert cfg.numerics["points"] == 20

    def test_model_flag_switches_defaults(self):
        cfg = resolve_config("sweep", model_kind="tls")
        assert cfg.model["kind"] == "tls"
        assert cfg.protocol["epsilon"] == 8.0

    def test_empty_file_is_rejected_with_key_list(self):
        with pytest.raises(ConfigInvalid) as err:
            resolve_config("sweep", {})
        msg = str(err.value)
        for key in ("experiment", "model", "protocol", "numerics", "output"):
            assert key in msg

    def test_file_experiment_must_match_subcommand(self):
        with pytest.raises(ConfigInvalid, match="sweep"):
            resolve_config("sweep", {"experiment": "open"})

    def test_unknown_keys_are_rejected_with_suggestions(self):
        bad = {"experiment": "sweep", "numerics": {"t_mim": 0.1}}
        with pytest.raises(ConfigInvalid, match="t_mim") as err:
            resolve_config("sweep", bad)
        assert "t_min" in str(err.value)

    def test_partial_file_merges_over_defaults(self):
        cfg = resolve_config(
            "sweep", {"experiment": "sweep", "numerics": {"points": 7}}
        )
        assert cfg.numerics["points"] == 7
        assert cfg.numerics["t_min"] == 0.05

    def test_flag_overrides_beat_file(self):
        cfg = resolve_config(
            "sweep",
            {"experiment": "sweep", "output": {"format": "csv"}},
            out_format="json",
            threads=3,
            rtol=1e-8,
        )
        assert cfg.output["format"] == "json"
        assert cfg.numerics["threads"] == 3
        assert cfg.numerics["rtol"] == 1e-8

    def test_model_kind_conflict_is_rejected(self):
        file_config = {"experiment": "sweep", "model": {"kind": "tls"}}
        with pytest.raises(ConfigInvalid, match="kind"):
            resolve_config("sweep", file_config, model_kind="ho")

    def test_validation_catches_bad_values(self):
        bad = {"experiment": "sweep", "numerics": {"points": 0}}
        with pytest.raises(ConfigInvalid, match="points"):
            resolve_config("sweep", bad)
        bad = {"experiment": "sweep", "protocol": {"omega_target": -1.0}}
        with pytest.raises(ConfigInvalid, match="omega_target"):
            resolve_config("sweep", bad)

    def test_tls_ramp_must_clear_the_gap_floor(self):
        bad = {
            "experiment": "sweep",
            "model": {"kind": "tls"},
            "protocol": {"omega_target": 4.0},
        }
        with pytest.raises(ConfigInvalid, match="epsilon"):
            resolve_config("sweep", bad)

    def test_open_rejects_ho_model(self):
        with pytest.raises(ConfigInvalid, match="kind"):
            resolve_config("open", {"experiment": "open", "model": {"kind": "ho"}})

    def test_bloch_vector_must_stay_in_ball(self):
        bad = {"experiment": "open", "model": {"initial_bloch": [1.0, 1.0, 1.0]}}
        with pytest.raises(ConfigInvalid, match="initial_bloch"):
            resolve_config("open", bad)

    def test_geo_waypoint_width_must_match_family(self):
        bad = {
            "experiment": "geo",
            "model": {"kind": "tls"},
            "protocol": {"waypoints": [[0.1, 0.2], [0.3, 0.4]]},
        }
        with pytest.raises(ConfigInvalid, match="waypoints"):
            resolve_config("geo", bad)

    def test_hash_is_stable_and_sensitive(self):
        a = resolve_config("sweep")
        b = resolve_config("sweep")
        c = resolve_config("sweep", {"experiment": "sweep", "numerics": {"points": 7}})
        assert a.sha256() == b.sha256()
        assert a.sha256() != c.sha256()

    def test_to_dict_is_a_deep_copy(self):
        cfg = resolve_config("sweep")
        cfg.to_dict()["numerics"]["points"] = 999
        assert cfg.numerics["points"] == 20

    def test_config_is_frozen(self):
        cfg = resolve_config("sweep")
        with pytest.raises(AttributeError):
            cfg.experiment = "open"


class TestConfigFileLoading:
    def test_round_trip(self, tmp_path):
        path = write_json(tmp_path / "c.json", {"experiment": "sweep"})
        assert load_config_file(path) == {"experiment": "sweep"}

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigInvalid, match="not found"):
            load_config_file(tmp_path / "nope.json")

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{not json")
        with pytest.raises(ConfigInvalid, match="JSON"):
            load_config_file(path)

    def test_non_object_top_level(self, tmp_path):
        path = write_json(tmp_path / "c.json", [1, 2, 3])
        with pytest.raises(ConfigInvalid, match="object"):
            load_config_file(path)


class TestExitCodes:
    def test_success_is_zero(self, tmp_path):
        cfg = write_json(
            tmp_path / "c.json",
            {
                "experiment": "geo",
                "model": {"kind": "tls"},
                "protocol": {"waypoints": [[0.1], [0.3]], "closed": True},
            },
        )
        assert run_cli(["geo", "--config", cfg, "--out", tmp_path / "out"]) == 0

    def test_empty_config_exits_two(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "c.json", {})
        assert run_cli(["sweep", "--config", cfg]) == 2
        err = capsys.readouterr().err
        assert "experiment" in err

    def test_malformed_config_exits_two(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text("{oops")
        assert run_cli(["sweep", "--config", cfg]) == 2

    def test_unknown_key_exits_two(self, tmp_path):
        cfg = write_json(
            tmp_path / "c.json", {"experiment": "sweep", "numerics": {"zzz": 1}}
        )
        assert run_cli(["sweep", "--config", cfg]) == 2

    def test_mismatched_experiment_exits_two(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"experiment": "open"})
        assert run_cli(["sweep", "--config", cfg]) == 2

    def test_total_runtime_failure_exits_four(self, tmp_path):
        # chi leaves the unit disc almost immediately: every propagation
        # inside mesolve fails before a single state is produced
        cfg = write_json(
            tmp_path / "c.json",
            {
                "experiment": "open",
                "protocol": {"chi0": 0.99, "abar": 40.0},
                "numerics": {"t_final": 2.0},
            },
        )
        assert run_cli(["open", "--config", cfg, "--out", tmp_path / "out"]) == 4


class TestGeoCommand:
    def test_retraced_circuit_gives_zero_phases(self, tmp_path):
        cfg = write_json(
            tmp_path / "c.json",
            {
                "experiment": "geo",
                "model": {"kind": "tls"},
                "protocol": {"waypoints": [[0.1], [0.4], [0.1]], "closed": True},
            },
        )
        out = tmp_path / "out"
        assert run_cli(["geo", "--config", cfg, "--out", out]) == 0
        header, rows = read_csv(out / "geo.csv")
        assert header == ["mode", "phase_line"]
        assert len(rows) == 4
        for row in rows:
            assert abs(row[1]) < 1e-10

    def test_surface_method_adds_column(self, tmp_path):
        cfg = write_json(
            tmp_path / "c.json",
            {
                "experiment": "geo",
                "model": {"kind": "two-spin-local"},
                "protocol": {
                    "waypoints": [
                        [0.25, 0.25],
                        [0.35, 0.25],
                        [0.35, 0.35],
                        [0.25, 0.35],
                    ],
                    "closed": True,
                },
                "numerics": {"method": "both", "modes": [0, 3]},
            },
        )
        out = tmp_path / "out"
        assert run_cli(["geo", "--config", cfg, "--out", out]) == 0
        header, rows = read_csv(out / "geo.csv")
        assert header == ["mode", "phase_line", "phase_surface"]
        assert [row[0] for row in rows] == [0.0, 3.0]
        for row in rows:
            assert abs(row[1] - row[2]) < 1e-6

    def test_mode_out_of_range_exits_two(self, tmp_path):
        cfg = write_json(
            tmp_path / "c.json",
            {
                "experiment": "geo",
                "model": {"kind": "tls"},
                "protocol": {"waypoints": [[0.1], [0.3]], "closed": True},
                "numerics": {"modes": [11]},
            },
        )
        assert run_cli(["geo", "--config", cfg, "--out", tmp_path / "out"]) == 2


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    # tiny three-point sweep shared by the content checks below
    root = tmp_path_factory.mktemp("sweep")
    cfg = write_json(
        root / "c.json",
        {
            "experiment": "sweep",
            "numerics": {"points": 3, "t_min": 0.1, "t_max": 0.4, "samples": 17},
        },
    )
    out = root / "out"
    assert run_cli(["sweep", "--config", cfg, "--out", out]) == 0
    return out


class TestSweepCommand:
    def test_csv_has_contract_columns(self, sweep_dir):
        header, rows = read_csv(sweep_dir / "sweep.csv")
        assert header == [
            "t_f",
            "F_inertial",
            "F_adiabatic",
            "neglog1mF_inertial",
            "mu_max",
            "upsilon_max",
        ]
        assert len(rows) == 3

    def test_rows_are_internally_consistent(self, sweep_dir):
        _, rows = read_csv(sweep_dir / "sweep.csv")
        for t_f, f_in, f_ad, neglog, mu, ups in rows:
            assert 0.0 < f_ad <= f_in <= 1.0
            # neglog comes from the cancellation-free 1 - F path, so
            # recomputing it from the rounded F only agrees to ~1e-8
            assert neglog == pytest.approx(-math.log10(1.0 - f_in), abs=1e-6)
            assert mu > 0.0 and ups > 0.0

    def test_manifest_records_provenance(self, sweep_dir):
        manifest = json.loads((sweep_dir / "sweep_manifest.json").read_text())
        assert manifest["tool_version"] == __version__
        assert manifest["data_file"] == "sweep.csv"
        assert manifest["status"] == "ok"
        assert manifest["point_errors"] == [None, None, None]
        assert set(manifest["columns"]) == {
            "t_f",
            "F_inertial",
            "F_adiabatic",
            "neglog1mF_inertial",
            "mu_max",
            "upsilon_max",
        }
        cfg = RunConfig(**manifest["config"])
        assert cfg.sha256() == manifest["config_sha256"]

    def test_manifest_has_no_timestamps(self, sweep_dir):
        manifest = json.loads((sweep_dir / "sweep_manifest.json").read_text())
        for key in manifest:
            assert "time" not in key and "date" not in key
        # no wall-clock leakage anywhere in the payload
        assert "2026" not in (sweep_dir / "sweep_manifest.json").read_text()


class TestDeterminism:
    def test_reruns_are_byte_identical(self, tmp_path):
        # same config, same out dir (the dir is part of the config hash)
        cfg = write_json(
            tmp_path / "c.json",
            {
                "experiment": "sweep",
                "numerics": {"points": 3, "t_min": 0.1, "t_max": 0.4, "samples": 17},
            },
        )
        out = tmp_path / "out"
        assert run_cli(["sweep", "--config", cfg, "--out", out]) == 0
        first = {
            name: (out / name).read_bytes()
            for name in ("sweep.csv", "sweep_manifest.json")
        }
        assert run_cli(["sweep", "--config", cfg, "--out", out]) == 0
        for name, payload in first.items():
            assert (out / name).read_bytes() == payload

    def test_thread_count_does_not_change_bytes(self, tmp_path):
        cfg = write_json(
            tmp_path / "c.json",
            {
                "experiment": "sweep",
                "numerics": {"points": 4, "t_min": 0.1, "t_max": 0.4, "samples": 17},
            },
        )
        serial = tmp_path / "serial"
        pooled = tmp_path / "pooled"
        assert run_cli(["sweep", "--config", cfg, "--out", serial]) == 0
        assert (
            run_cli(["sweep", "--config", cfg, "--out", pooled, "--threads", 3]) == 0
        )
        assert (serial / "sweep.csv").read_bytes() == (
            pooled / "sweep.csv"
        ).read_bytes()

    def test_csv_keeps_full_precision(self, tmp_path):
        cfg = write_json(
            tmp_path / "c.json",
            {
                "experiment": "sweep",
                "output": {"format": "json"},
                "numerics": {"points": 2, "t_min": 0.1, "t_max": 0.4, "samples": 17},
            },
        )
        out_json = tmp_path / "j"
        assert run_cli(["sweep", "--config", cfg, "--out", out_json]) == 0
        cfg_csv = write_json(
            tmp_path / "c2.json",
            {
                "experiment": "sweep",
                "numerics": {"points": 2, "t_min": 0.1, "t_max": 0.4, "samples": 17},
            },
        )
        out_csv = tmp_path / "c"
        assert run_cli(["sweep", "--config", cfg_csv, "--out", out_csv]) == 0
        payload = json.loads((out_json / "sweep.json").read_text())
        _, rows = read_csv(out_csv / "sweep.csv")
        # %.17g survives a float round trip bit for bit
        assert np.array_equal(np.array(payload["rows"]), np.array(rows))


class TestSingleCommand:
    def test_one_row_with_sweep_columns(self, tmp_path):
        cfg = write_json(
            tmp_path / "c.json",
            {
                "experiment": "single",
                "protocol": {"t_f": 0.5},
                "numerics": {"samples": 17},
            },
        )
        out = tmp_path / "out"
        assert run_cli(["single", "--config", cfg, "--out", out]) == 0
        header, rows = read_csv(out / "single.csv")
        assert header[0] == "t_f"
        assert len(rows) == 1
        assert rows[0][0] == 0.5


class TestDiagnoseCommand:
    def test_ho_gets_closed_form_column(self, tmp_path):
        cfg = write_json(
            tmp_path / "c.json",
            {
                "experiment": "diagnose",
                "protocol": {"t_f": 0.5},
                "numerics": {"samples": 9},
            },
        )
        out = tmp_path / "out"
        assert run_cli(["diagnose", "--config", cfg, "--out", out]) == 0
        header, rows = read_csv(out / "diagnose.csv")
        assert header == ["t", "mu", "upsilon", "upsilon_closed"]
        assert len(rows) == 9
        assert rows[0][0] == 0.0
        assert rows[-1][0] == 0.5

    def test_tls_has_no_closed_form_column(self, tmp_path):
        cfg = write_json(
            tmp_path / "c.json",
            {
                "experiment": "diagnose",
                "model": {"kind": "tls"},
                "protocol": {"t_f": 0.5},
                "numerics": {"samples": 5},
            },
        )
        out = tmp_path / "out"
        assert run_cli(["diagnose", "--config", cfg, "--out", out]) == 0
        header, _ = read_csv(out / "diagnose.csv")
        assert header == ["t", "mu", "upsilon"]


class TestOpenCommand:
    def test_trajectory_stays_physical(self, tmp_path):
        cfg = write_json(
            tmp_path / "c.json",
            {
                "experiment": "open",
                "numerics": {"t_final": 0.5, "points": 11},
            },
        )
        out = tmp_path / "out"
        assert run_cli(["open", "--config", cfg, "--out", out]) == 0
        header, rows = read_csv(out / "open.csv")
        assert header[:4] == ["t", "bloch_x", "bloch_y", "bloch_z"]
        assert len(rows) == 11
        for row in rows:
            pops = row[4] + row[5]
            assert pops == pytest.approx(1.0, abs=1e-9)
            assert abs(row[6]) < 1e-9
            assert row[7] > -1e-7

    def test_secular_warning_lands_in_manifest(self, tmp_path):
        cfg = write_json(
            tmp_path / "c.json",
            {
                "experiment": "open",
                "numerics": {"t_final": 0.05, "points": 3},
            },
        )
        out = tmp_path / "out"
        assert run_cli(["open", "--config", cfg, "--out", out]) == 0
        manifest = json.loads((out / "open_manifest.json").read_text())
        assert any("secular" in w for w in manifest["warnings"])
