import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import box7, make_scenario, traj_from_rows
from dpd.arbitration import SwitchConfig
from dpd.harness import (
    Config,
    ConfigError,
    EpisodeLog,
    MetricsReport,
    compute_collision_rate,
    compute_driving_score,
    compute_l2,
    config_from_dict,
    episode_report,
    export_report,
    load_config,
    read_report,
    route_completion,
    run_episode,
)
from dpd.harness.calibrate import calibrate_thresholds
from dpd.harness.cli import main
from dpd.harness.report import CSV_COLUMNS, read_csv_rows
from dpd.harness.suite import bundled_root, hazard_suite, hazard_suite_dir, intersection_path, write_bundle
from dpd.world import Trajectory, load_scenario, scenario_to_dict

# ---------------------------------------------------------------------------
# synthetic logs: ego drives east at 4 m/s, each tick plans six 2 m steps
# ---------------------------------------------------------------------------

N_TICKS = 8


def synthetic_log(agents=None, collisions=None, red=None, final_x=None, name="synthetic"):
    sc = make_scenario(name=name, n=N_TICKS, v=4.0)
    agents = agents or {}
    collisions = collisions or {}
    red = red or {}
    log = EpisodeLog({"scenario": name, "scenario_data": scenario_to_dict(sc), "mode": "fast_only", "seed": 0})
    for t in range(N_TICKS):
        x = 2.0 * (t + 1)
        if final_x is not None:
            x = min(x, final_x)
        traj = [[x + 2.0 * k, 0.0, 0.0, 4.0] for k in range(6)]
        for k, y in agents.get(("lift", t), {}).items():
            traj[k][1] = y
        log.append({
            "tick": t,
            "pathway": "Fast",
            "trajectory": traj,
            "ego": box7(x, 0.0) + [4.0],
            "agents": agents.get(t, []),
            "collisions": collisions.get(t, []),
            "red_light_violations": red.get(t, 0),
        })
    return log, sc


def hit_at(tick, k):
    """Tick ``tick`` alone swerves to y=10 at step k, where an agent waits one record later."""
    x = 2.0 * (tick + 1) + 2.0 * k
    return {("lift", tick): {k: 10.0}, tick + k: [box7(x, 10.0)]}


class TestL2:
    def _straight(self, offset=0.0, dt=0.5):
        rows = [[4.0 * dt * (k + 1), offset, 0.0, 4.0] for k in range(6)]
        return Trajectory(np.array(rows), dt, [0.0, offset, 0.0, 4.0])

    def test_identity(self):
        t = self._straight()
        assert compute_l2(t, t) == {"1s": 0.0, "2s": 0.0, "3s": 0.0, "avg": 0.0}

    def test_offset(self):
        got = compute_l2(self._straight(1.0), self._straight())
        for v in got.values():
            assert v == pytest.approx(1.0, abs=1e-12)

    def test_interpolated_oracle(self):
        dt = 0.4
        n = 8
        planned_rows = [[2.0 * dt * k, 0.5 * (dt * k) ** 2, 0.0, 2.0] for k in range(1, n + 1)]
        expert_rows = [[2.0 * dt * k, 0.0, 0.0, 2.0] for k in range(1, n + 1)]
        planned = Trajectory(np.array(planned_rows), dt, [0, 0, 0, 2])
        expert = Trajectory(np.array(expert_rows), dt, [0, 0, 0, 2])
        # by hand: t=1 sits halfway between steps 2 and 3, t=2 is step 5, t=3 is a quarter past step 7
        y = [0.0] + [r[1] for r in planned_rows]
        want = [0.5 * (y[2] + y[3]), y[5], 0.5 * (y[7] + y[8])]
        t3 = 3.0 / dt - 7
        want[2] = y[7] + t3 * (y[8] - y[7])
        got = compute_l2(planned, expert)
        assert [got["1s"], got["2s"], got["3s"]] == pytest.approx(want, abs=1e-12)
        assert abs(got["avg"] - sum(want) / 3) <= 1e-12

    def test_short_horizon(self):
        short = Trajectory(np.array([[1.0, 0.0, 0.0, 1.0]] * 4), 0.5, [0, 0, 0, 1])
        with pytest.raises(ValueError):
            compute_l2(short, short)

    @given(st.lists(st.floats(-5, 5), min_size=6, max_size=6))
    def test_avg_is_mean(self, ys):
        rows = [[k + 1.0, y, 0.0, 1.0] for k, y in enumerate(ys)]
        got = compute_l2(traj_from_rows(rows, origin=[0, 0, 0, 1]), self._straight())
        assert abs(got["avg"] - (got["1s"] + got["2s"] + got["3s"]) / 3) <= 1e-12


class TestCollisionRate:
    def test_clean(self):
        log, _ = synthetic_log()
        assert compute_collision_rate([log, log]) == {"1s": 0.0, "2s": 0.0, "3s": 0.0, "avg": 0.0}

    def test_all_collide_first_tick(self):
        logs = [synthetic_log(agents={0: [box7(2.0, 0.0)]})[0] for _ in range(3)]
        assert compute_collision_rate(logs) == {"1s": 1.0, "2s": 1.0, "3s": 1.0, "avg": 1.0}

    def test_mixed_buckets(self):
        # step k lands at (k + 1) * 0.5 s: k=1 in every bucket, k=3 from 2 s, k=5 only at 3 s
        logs = [synthetic_log()[0]] + [synthetic_log(agents=hit_at(1, k))[0] for k in (1, 3, 5)]
        got = compute_collision_rate(logs)
        assert got == {"1s": 0.25, "2s": 0.5, "3s": 0.75, "avg": pytest.approx(0.5)}

    def test_empty(self):
        with pytest.raises(ValueError):
            compute_collision_rate([])


class TestDrivingScore:
    def test_clean_full(self):
        log, sc = synthetic_log()
        ds = compute_driving_score(log, sc)
        assert (ds["route_completion"], ds["infraction_score"], ds["driving_score"]) == (1.0, 1.0, 1.0)

    def test_one_collision(self):
        log, sc = synthetic_log(collisions={3: [0], 4: [0]})
        assert compute_driving_score(log, sc)["driving_score"] == pytest.approx(0.5)

    def test_partial_with_violations(self):
        log, sc = synthetic_log(collisions={2: [0], 3: [0], 5: [0, 1]}, red={4: 1}, final_x=8.0)
        ds = compute_driving_score(log, sc)
        # rising edges: {0} at tick 2, {0, 1} at tick 5; route 8 m of 16 m
        assert ds["collision_events"] == 3
        assert ds["route_completion"] == pytest.approx(0.5)
        assert ds["driving_score"] == pytest.approx(0.5 * 0.5 ** 3 * 0.7)
        assert route_completion(log, sc) == ds["route_completion"]

    def test_identity_enforced(self):
        with pytest.raises(ValueError):
            MetricsReport("s", "dual", 0, {}, {}, 0.5, 0.5, 0.3, 0.0, 0, 0)


class TestRunner:
    def test_empty_world_fast_only(self):
        sc = make_scenario(n=10)
        log = run_episode(sc, mode="fast_only")
        rep = episode_report(log, sc)
        assert rep.collision_events == 0
        assert rep.route_completion == pytest.approx(1.0, abs=1e-12)
        assert all(r["pathway"] == "Fast" and r["reason"] == "FastOnlyMode" for r in log.records)

    @pytest.mark.parametrize("name", ["ped_00", "red_00", "blocked_00"])
    def test_fast_only_never_slow(self, name):
        sc = load_scenario(hazard_suite_dir() / f"{name}.json")
        log = run_episode(sc, mode="fast-only")
        assert log.summary["slow_ticks"] == 0
        assert all(r["meta_actions"] is None for r in log.records)

    def test_determinism(self):
        sc = load_scenario(intersection_path())
        a = run_episode(sc, Config(), "dual", 5).to_jsonl()
        b = run_episode(sc, Config(), "dual", 5).to_jsonl()
        assert a == b
        assert run_episode(sc, Config(), "dual", 6).to_jsonl() != a

    def test_intersection_slow_stop(self):
        sc = load_scenario(intersection_path())
        log = run_episode(sc)
        slow = [r for r in log.records if r["pathway"] == "Slow"]
        assert slow and any("Stop" in r["meta_actions"] for r in slow)
        assert len(log.records) == sc.horizon_steps

    def test_log_round_trip(self, tmp_path):
        log = run_episode(make_scenario(n=6), mode="dual")
        path = log.write(tmp_path / "x.jsonl")
        back = EpisodeLog.read(path)
        assert back.to_jsonl() == log.to_jsonl()
        assert "wall_time" not in path.read_text()

    def test_log_append_only(self):
        log, _ = synthetic_log()
        with pytest.raises(ValueError):
            log.append({"tick": 0})
        log.summary = {}
        with pytest.raises(RuntimeError):
            log.append({"tick": N_TICKS})

    def test_cooldown_reuses_feedback(self):
        log = run_episode(load_scenario(intersection_path()))
        cool = [r for r in log.records if r["reason"] == "Cooldown"]
        assert cool and all(r["feedback_applied"] for r in cool)

    def test_external_reasoner_fallback(self):
        cfg = replace(Config(), reasoner=replace(Config().reasoner, kind="http", url="http://127.0.0.1:1/",
                                                 timeout_s=0.2))
        log = run_episode(load_scenario(intersection_path()), cfg)
        rules = run_episode(load_scenario(intersection_path()))
        assert log.summary["fallbacks"] == log.summary["slow_ticks"] > 0
        strip = ("reasoner_source", "fallback")
        for a, b in zip(log.records, rules.records):
            assert {k: v for k, v in a.items() if k not in strip} == {k: v for k, v in b.items() if k not in strip}


class TestReport:
    def _reports(self, n):
        return [replace(episode_report(*synthetic_log(name=f"s{i:02d}")), seed=i % 3) for i in range(n)]

    def test_empty(self, tmp_path):
        json_path, csv_path = export_report([], tmp_path / "r")
        assert read_report(json_path) == []
        assert read_csv_rows(csv_path) == []
        assert csv_path.read_text().strip().split(",") == CSV_COLUMNS

    def test_round_trip(self, tmp_path):
        rep = self._reports(1)
        export_report(rep, tmp_path / "r.json")
        assert read_report(tmp_path / "r.json") == rep

    def test_twenty_rows(self, tmp_path):
        reps = self._reports(20)
        export_report(list(reversed(reps)), tmp_path / "r")
        rows = read_csv_rows(tmp_path / "r")
        assert len(rows) == 20
        assert [r["scenario"] for r in rows] == sorted(r.scenario for r in reps)
        assert float(rows[0]["driving_score"]) == reps[0].driving_score

    def test_schema_version(self, tmp_path):
        p = tmp_path / "r.json"
        p.write_text(json.dumps({"schema_version": "0", "reports": []}))
        with pytest.raises(ValueError):
            read_report(p)

    def test_byte_identical(self, tmp_path):
        sc = load_scenario(intersection_path())
        paths = []
        for i in range(2):
            rep = episode_report(run_episode(sc, seed=1), sc)
            paths.append(export_report([rep], tmp_path / f"r{i}"))
        for a, b in zip(*paths):
            assert a.read_bytes() == b.read_bytes()


class TestConfig:
    def test_defaults(self):
        assert load_config(None, {}) == Config()

    def test_toml(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text('[reward]\nsigma_coll = 3.0\n[reasoner]\nkind = "rules"\n[reasoner.camera]\nfov = 1.2\n')
        cfg = load_config(p, {})
        assert cfg.reward.sigma_coll == 3.0 and cfg.camera.fov == 1.2

    def test_json_and_env_path(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"arbitration": {"tau_reward": -1.0}}))
        assert load_config(None, {"DPD_CONFIG": str(p)}).arbitration.tau_reward == -1.0

    def test_env_overrides(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("[reward]\nsigma_coll = 3.0\n")
        env = {"DPD__REWARD__SIGMA_COLL": "4", "DPD__REASONER__CAMERA__HEIGHT": "2.5",
               "DPD__REASONER__KIND": "subprocess", "DPD__REASONER__COMMAND": '["my-reasoner", "--x"]'}
        cfg = load_config(p, env)
        assert cfg.reward.sigma_coll == 4
        assert cfg.camera.height == 2.5
        assert cfg.reasoner.command == ("my-reasoner", "--x")

    @pytest.mark.parametrize("data", [
        {"rewards": {}},
        {"reward": {"sigma": 1.0}},
        {"reward": {"sigma_coll": -1.0}},
        {"reasoner": {"kind": "http"}},
        {"arbitration": {"tau_uncertainty": 0.0}},
    ])
    def test_errors(self, data):
        with pytest.raises(ConfigError):
            config_from_dict(data)

    def test_bad_files(self, tmp_path):
        bad = tmp_path / "c.toml"
        bad.write_text("[reward\n")
        with pytest.raises(ConfigError):
            load_config(bad, {})
        with pytest.raises(ConfigError):
            load_config(None, {"DPD__REWARD": "1"})

    def test_digest(self):
        assert Config().digest() == Config().digest()
        assert Config().digest() != replace(Config(), arbitration=SwitchConfig(-1.0, 1.0)).digest()
        assert config_from_dict(json.loads(json.dumps(Config().to_dict()))) == Config()


class TestSuite:
    def test_twenty_hazards(self):
        suite = hazard_suite()
        assert len(suite) == 20
        assert {n.split("_")[0] for n in suite} == {"ped", "red", "blocked"}

    def test_bundle_in_sync(self, tmp_path):
        for p in write_bundle(tmp_path):
            rel = p.relative_to(tmp_path)
            assert (bundled_root() / rel).read_bytes() == p.read_bytes(), rel
        assert len(list(hazard_suite_dir().glob("*.json"))) == 20

    def test_calibration_matches_frozen(self):
        scs = [load_scenario(p) for p in sorted(hazard_suite_dir().glob("*.json"))]
        tau_r, tau_u = calibrate_thresholds(scs)
        assert tau_r == SwitchConfig().tau_reward
        assert tau_u == SwitchConfig().tau_uncertainty


class TestCli:
    def test_run_eval_inspect(self, tmp_path, capsys):
        out = tmp_path / "logs"
        assert main(["run", "--scenario", str(intersection_path()), "--out", str(out), "--seed", "2"]) == 0
        assert main(["run", "--scenario", str(intersection_path()), "--out", str(out), "--mode", "fast-only",
                     "--seed", "2"]) == 0
        logs = sorted(out.glob("*.jsonl"))
        assert [p.name for p in logs] == ["intersection.dual.seed2.jsonl", "intersection.fast_only.seed2.jsonl"]
        assert (out / "timing.json").exists()

        assert main(["eval", "--logs", str(out), "--out", str(tmp_path / "rep")]) == 0
        assert len(read_report(tmp_path / "rep")) == 2
        capsys.readouterr()

        assert main(["inspect", "--log", str(logs[0])]) == 0
        text = capsys.readouterr().out
        assert "Slow" in text and "actions=Stop,Wait" in text and "summary:" in text
        assert main(["inspect", "--log", str(logs[0]), "--tick", "0"]) == 0
        assert "bits=11100001" in capsys.readouterr().out
        assert main(["inspect", "--log", str(logs[0]), "--tick", "99"]) == 2

    def test_run_directory(self, tmp_path):
        src = tmp_path / "scs"
        src.mkdir()
        for name in ("a", "b"):
            (src / f"{name}.json").write_text(json.dumps(scenario_to_dict(make_scenario(name=name, n=4))))
        assert main(["run", "--scenario", str(src), "--out", str(tmp_path / "o"), "--mode", "fast-only"]) == 0
        assert len(list((tmp_path / "o").glob("*.jsonl"))) == 2

    def test_errors(self, tmp_path, capsys):
        assert main(["run", "--scenario", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
        bad = tmp_path / "bad.json"
        bad.write_text('{"dt": 0.5}')
        assert main(["run", "--scenario", str(bad), "--out", str(tmp_path)]) == 2
        cfg = tmp_path / "c.toml"
        cfg.write_text("[nope]\n")
        assert main(["run", "--scenario", str(intersection_path()), "--config", str(cfg),
                     "--out", str(tmp_path)]) == 2
        assert main(["eval", "--logs", str(tmp_path / "empty"), "--out", str(tmp_path / "r")]) == 2
        assert main(["inspect", "--log", str(tmp_path / "missing.jsonl")]) == 2
        junk = tmp_path / "junk.jsonl"
        junk.write_text("not json\n")
        assert main(["inspect", "--log", str(junk)]) == 2
        assert "error" in capsys.readouterr().err

    def test_calibrate_and_generate(self, tmp_path, capsys):
        src = tmp_path / "one"
        src.mkdir()
        (src / "ped_00.json").write_bytes((hazard_suite_dir() / "ped_00.json").read_bytes())
        assert main(["calibrate", "--scenario", str(src)]) == 0
        out = capsys.readouterr().out
        assert "tau_reward = " in out and "tau_uncertainty = " in out
        assert main(["generate-suite", "--out", str(tmp_path / "gen")]) == 0
        assert len(list((tmp_path / "gen" / "hazard").glob("*.json"))) == 20

    def test_same_as_library(self, tmp_path):
        main(["run", "--scenario", str(intersection_path()), "--out", str(tmp_path), "--seed", "3"])
        lib = run_episode(load_scenario(intersection_path()), load_config(None, {}), "dual", 3)
        assert (tmp_path / "intersection.dual.seed3.jsonl").read_text() == lib.to_jsonl()
        assert math.isfinite(lib.wall_time)
