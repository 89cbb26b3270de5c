import json
import math

import numpy as np
import pytest

from analysis import GeneralLinearFamily
from errors import InvalidInputError
from models import CoupledModelParams, RampRate
from paradigms import Protocol, simulate, simulate_until_converged
from report_utils import (
    kv_tree_text,
    read_family,
    read_trajectory_csv,
    write_family,
    write_kv_tree,
    write_trajectory,
)

COUPLED = CoupledModelParams(k=20.0, rate=RampRate(p_max=0.2, e_sat=7.5))


class TestTrajectoryFiles:
    def test_csv_header_and_first_row(self, tmp_path):
        path = write_trajectory(simulate(COUPLED, Protocol.ticvf(15.0, n_trials=5)), tmp_path / "t.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "trial,x,error,p"
        assert lines[1] == "0,0.0,15.0,0.2"
        assert lines[2] == "1,4.0,15.0,0.2"

    def test_csv_replay_is_lossless(self, tmp_path):
        traj = simulate(COUPLED, Protocol.vmr(10.0, n_trials=40))
        back = read_trajectory_csv(write_trajectory(traj, tmp_path / "t.csv"))
        assert back.protocol == traj.protocol
        assert np.array_equal(back.x, traj.x)
        assert np.array_equal(back.p, traj.p)

    def test_kv_tree_replay(self, tmp_path):
        traj = simulate_until_converged(COUPLED, Protocol.ticvf(3.75, n_trials=1))
        back = read_trajectory_csv(write_trajectory(traj, tmp_path / "t.json", "kv-tree"))
        assert back == traj

    def test_writes_are_byte_identical(self, tmp_path):
        traj = simulate(COUPLED, Protocol.ticvf(45.0, n_trials=20))
        first = write_trajectory(traj, tmp_path / "a.csv").read_bytes()
        second = write_trajectory(traj, tmp_path / "a.csv").read_bytes()
        assert first == second
        assert list(tmp_path.iterdir()) == [tmp_path / "a.csv"]

    @pytest.mark.parametrize("e_clamp", [3.75, 15.0, 45.0])
    def test_bundled_trajectories_match_a_fresh_run(self, fixtures_dir, e_clamp):
        bundled = read_trajectory_csv(fixtures_dir / f"coupled_ticvf_{e_clamp:g}.csv")
        fresh = simulate(COUPLED, Protocol.ticvf(e_clamp, n_trials=50))
        assert bundled.protocol == fresh.protocol
        assert np.array_equal(bundled.x, fresh.x)
        assert np.array_equal(bundled.p, fresh.p)

    def test_write_into_a_file_path_is_invalid_input(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        traj = simulate(COUPLED, Protocol.ticvf(15.0, n_trials=2))
        with pytest.raises(InvalidInputError, match="cannot write"):
            write_trajectory(traj, blocker / "t.csv")

    def test_write_over_a_directory_leaves_no_temp_file(self, tmp_path):
        (tmp_path / "t.csv").mkdir()
        traj = simulate(COUPLED, Protocol.ticvf(15.0, n_trials=2))
        with pytest.raises(InvalidInputError, match="cannot write"):
            write_trajectory(traj, tmp_path / "t.csv")
        assert list(tmp_path.iterdir()) == [tmp_path / "t.csv"]

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("n,x,e,p\n0,0.0,1.0,0.0\n1,0.0,1.0,0.0\n")
        with pytest.raises(InvalidInputError, match="header"):
            read_trajectory_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidInputError, match="not found"):
            read_trajectory_csv(tmp_path / "absent.csv")


class TestFamilyFiles:
    def test_round_trip(self, tmp_path):
        family = GeneralLinearFamily.from_rate(RampRate(), 20.0, np.linspace(0.5, 45.0, 50))
        back = read_family(write_family(family, tmp_path / "family.csv"))
        assert back.k_ref == 20.0
        assert np.array_equal(back.f, family.f)
        assert np.array_equal(back.g, family.g)

    def test_bundled_family(self, fixtures_dir):
        family = read_family(fixtures_dir / "family_ramp.csv")
        assert family.k_ref == 20.0
        assert family.errors.tolist()[:2] == [1.875, 3.75]

    def test_requires_k_ref_line(self, tmp_path):
        path = tmp_path / "family.csv"
        path.write_text("e,f,g\n1.0,0.9,2.0\n")
        with pytest.raises(InvalidInputError, match="k_ref"):
            read_family(path)


class TestKvTree:
    def test_non_finite_values_stay_strict_json(self, tmp_path):
        path = write_kv_tree({"ratio": math.inf, "values": [1.0, np.float64(2.5)]}, tmp_path / "r.json")
        assert json.loads(path.read_text()) == {"ratio": "inf", "values": [1.0, 2.5]}

    def test_text_is_stable(self):
        assert kv_tree_text({"b": 1, "a": [0.1]}) == kv_tree_text({"b": 1, "a": [0.1]})
