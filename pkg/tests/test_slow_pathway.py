import http.server
import json
import math
import sys
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import box7, cv_agent, make_scenario, straight_lane, traj_from_rows
from dpd.harness.suite import intersection_path
from dpd.slow_pathway import (
    K,
    PLANNING_STATE_SCHEMA,
    VOCABULARY,
    CameraConfig,
    ExternalReasoner,
    MetaAction,
    PlanningState,
    ReasonerConfig,
    ReasonerResponse,
    ValidationError,
    build_bev_prompt,
    build_request,
    build_visual_prompt,
    meta_actions_for,
    rule_based_reason,
    validate_response,
)
from dpd.slow_pathway.prompts import project_point
from dpd.slow_pathway.rules import adjacent_lane_side
from dpd.world import AgentBox, NavigationCommand, Pose2D, initial_state, load_scenario


def prompt_for(scenario):
    return build_bev_prompt(initial_state(scenario), scenario)


def reason(**kw):
    return rule_based_reason(prompt_for(make_scenario(**kw)))


def control(kind, x, y=0.0, value=None):
    out = {"kind": kind, "position": [x, y], "applies_to_lane": 0}
    if value is not None:
        out["value"] = value
    return out


VALID = {
    "planning_state": dict.fromkeys(PLANNING_STATE_SCHEMA, 0) | {"red_light": 1},
    "meta_actions": ["Stop", "Wait"],
    "justification": "red light",
}


class TestBevPrompt:
    def test_zero_agents(self):
        p = prompt_for(make_scenario())
        assert p.agents == ()
        assert p.ego_lane == 0

    def test_nearest_first(self):
        sc = make_scenario(agents=[cv_agent(10, 0), cv_agent(0, 5)])
        p = prompt_for(sc)
        assert [a.distance for a in p.agents] == [5.0, 10.0]

    def test_lossless_boxes(self):
        sc = make_scenario(agents=[cv_agent(10, 1, 0.3, 2.0, "cyclist", (1.8, 0.6, 1.7))])
        p = prompt_for(sc)
        a = p.agents[0]
        assert a.box == tuple(box7(10, 1, 0.3, 1.8, 0.6, 1.7))
        assert a.velocity == 2.0
        assert a.to_box() == sc.agents[0].box

    def test_intersection_file(self):
        sc = load_scenario(intersection_path())
        p = prompt_for(sc)
        assert len(p.agents) == len(sc.agents) == 2
        assert {a.kind.value for a in p.agents} == {"pedestrian", "vehicle"}
        reds = [c for c in p.controls if c.kind.value == "red_light"]
        assert len(reds) == 1 and reds[0].governs_ego and reds[0].distance_ahead > 0
        json.dumps(p.to_dict())


class TestVisualPrompt:
    cam = CameraConfig()
    ego = AgentBox(Pose2D(0.0, 0.0, 0.0), 4.5, 2.0)

    def test_axis(self):
        u, v = project_point(10.0, 0.0, 0.0, self.cam)
        assert u == pytest.approx(0.5)
        assert v == pytest.approx(0.5 + 0.5 * self.cam.height / 10.0)

    def test_behind(self):
        assert project_point(-5.0, 0.0, 0.0, self.cam) is None

    def test_edge(self):
        assert project_point(10.0, -10.0, 0.0, self.cam)[0] == pytest.approx(1.0)
        assert project_point(10.0, 10.0, 0.0, self.cam)[0] == pytest.approx(0.0)
        assert project_point(10.0, -11.0, 0.0, self.cam) is None

    @given(st.floats(-1.2, 1.2), st.floats(2.0, 80.0), st.floats(0.5, 2.5), st.floats(-math.pi, math.pi))
    def test_pinhole_oracle(self, bearing, rng_m, fov, yaw):
        cam = CameraConfig(fov=fov)
        # a ground point at bearing (positive = left) and range, seen from heading yaw
        dx = rng_m * math.cos(yaw + bearing)
        dy = rng_m * math.sin(yaw + bearing)
        fwd = rng_m * math.cos(bearing)
        u_expect = 0.5 - 0.5 * math.tan(bearing) / math.tan(fov / 2)
        v_expect = 0.5 + 0.5 * cam.height / (fwd * math.tan(fov / 2))
        got = project_point(dx, dy, yaw, cam)
        inside = 1e-6 < u_expect < 1 - 1e-6 and v_expect < 1 - 1e-6
        outside = u_expect < -1e-6 or u_expect > 1 + 1e-6 or v_expect > 1 + 1e-6
        if inside:
            assert got == pytest.approx((u_expect, v_expect), abs=1e-9)
        elif outside:
            assert got is None

    def test_trajectory(self):
        traj = traj_from_rows([[-3, 0, 0, 1], [5, 0, 0, 1], [10, -10, 0, 1], [20, 0, 0, 1]], origin=[0, 0, 0, 1])
        vp = build_visual_prompt(traj, self.ego)
        assert vp.waypoint_indices == (1, 2, 3)
        assert all(0 <= u <= 1 and 0 <= v <= 1 for u, v in vp.projected_waypoints)
        assert vp.projected_waypoints[1][0] == pytest.approx(1.0)

    @pytest.mark.parametrize("fov", [0.0, math.pi])
    def test_bad_camera(self, fov):
        with pytest.raises(ValueError):
            CameraConfig(fov=fov)


class TestRules:
    def test_empty_world(self):
        r = reason(controls=[control("green_light", 15)])
        assert r.planning_state.bits == (0,) * K
        assert r.meta_actions == (MetaAction.KEEP_LANE,)
        assert r.source == "rules"

    def test_intersection(self):
        r = rule_based_reason(prompt_for(load_scenario(intersection_path())))
        assert list(r.planning_state.bits) == [1, 1, 1, 0, 0, 0, 0, 1]
        assert r.meta_actions == (MetaAction.STOP, MetaAction.WAIT, MetaAction.PREPARE_TURN)
        assert set(r.answers) == {"scene", "signs", "objects", "planning_state", "plan"}

    def test_pedestrian_far_lateral(self):
        r = reason(agents=[cv_agent(10, 30, 0, 0, "pedestrian", (0.6, 0.6, 1.7))])
        assert r.planning_state["pedestrian_ahead"] == 0

    def test_pedestrian_predicted_entry(self):
        # walks into the corridor within the prediction horizon
        walker = cv_agent(10, 4, -math.pi / 2, 1.5, "pedestrian", (0.6, 0.6, 1.7))
        assert reason(agents=[walker]).planning_state["pedestrian_ahead"] == 1

    def test_pure(self):
        p = prompt_for(load_scenario(intersection_path()))
        assert rule_based_reason(p) == rule_based_reason(p)

    COVERAGE = {
        "pedestrian_ahead": dict(agents=[cv_agent(10, 0, 0, 0, "pedestrian", (0.6, 0.6, 1.7))]),
        "vehicle_conflict": dict(agents=[cv_agent(10, 8, -math.pi / 2, 5.0)]),
        "red_light": dict(controls=[control("red_light", 15)]),
        "stop_sign": dict(controls=[control("stop_sign", 15)]),
        "yield_required": dict(controls=[control("yield_sign", 15)]),
        "lane_blocked": dict(agents=[cv_agent(20, 0, 0, 0, "static")]),
        "speed_limit_exceeded": dict(lanes=[straight_lane(0.0, limit=5.0)]),
        "intersection_ahead": dict(lanes=[straight_lane(0.0), {"centerline": [[20, -50], [20, 50]],
                                                                "speed_limit": 13.9}]),
    }

    @pytest.mark.parametrize("bit", PLANNING_STATE_SCHEMA)
    def test_schema_coverage(self, bit):
        assert set(self.COVERAGE) == set(PLANNING_STATE_SCHEMA)
        bits = reason(**self.COVERAGE[bit]).planning_state
        assert bits.active() == [bit]

    @pytest.mark.parametrize("bits,command,expected", [
        ({"red_light": 1, "vehicle_conflict": 1}, "straight", ["Stop", "Wait"]),
        ({"yield_required": 1}, "straight", ["Yield", "Decelerate"]),
        ({"speed_limit_exceeded": 1, "vehicle_conflict": 1}, "straight", ["Yield", "Decelerate"]),
        ({"lane_blocked": 1}, "straight", ["Change_Lane_Left"]),
        ({"intersection_ahead": 1}, "straight", ["Keep_Lane"]),
        ({"intersection_ahead": 1, "speed_limit_exceeded": 1}, "right", ["Decelerate", "Prepare_Turn"]),
    ])
    def test_priority_table(self, bits, command, expected):
        got = meta_actions_for(PlanningState.from_flags(**bits), NavigationCommand(command))
        assert [a.value for a in got] == expected

    def test_adjacent_side(self):
        two = [straight_lane(0.0), straight_lane(3.5)]
        assert adjacent_lane_side(prompt_for(make_scenario(lanes=two))) == "left"
        ego = {"box": box7(0, 3.5), "velocity": 8.0}
        assert adjacent_lane_side(prompt_for(make_scenario(lanes=two, ego=ego))) == "right"
        assert adjacent_lane_side(prompt_for(make_scenario())) is None


class TestValidate:
    def test_valid(self):
        r = validate_response(VALID)
        assert r.planning_state.active() == ["red_light"]
        assert r.meta_actions == (MetaAction.STOP, MetaAction.WAIT)
        assert validate_response(r) == r

    def test_truncates(self):
        raw = dict(VALID, meta_actions=["Stop", "Wait", "Yield", "Decelerate", "Keep_Lane", "Accelerate"])
        assert [a.value for a in validate_response(raw).meta_actions] == ["Stop", "Wait", "Yield", "Decelerate"]

    def test_named_map(self):
        named = {k: (k in ("pedestrian_ahead", "intersection_ahead")) for k in reversed(PLANNING_STATE_SCHEMA)}
        r = validate_response(dict(VALID, planning_state=named))
        assert r.planning_state.bits == (1, 0, 0, 0, 0, 0, 0, 1)

    def test_bit_list(self):
        r = validate_response(dict(VALID, planning_state=[0, 1, 0, 0, 0, 0, 0, 0]))
        assert r.planning_state.active() == ["vehicle_conflict"]

    @pytest.mark.parametrize("bad", [
        {"meta_actions": ["Stop"]},
        dict(VALID, planning_state=[0] * 7),
        dict(VALID, planning_state={"red_light": 1}),
        dict(VALID, planning_state=[2] + [0] * 7),
        dict(VALID, meta_actions=["Fly"]),
        dict(VALID, meta_actions=[]),
        dict(VALID, meta_actions="Stop"),
        ["not", "a", "map"],
    ])
    def test_errors(self, bad):
        with pytest.raises(ValidationError):
            validate_response(bad)

    def test_strips(self):
        raw = dict(VALID, extra=1, justification=5, answers={"scene": "x", "bogus": "y", "plan": 3})
        r = validate_response(raw)
        assert r.justification == ""
        assert r.answers == {"scene": "x"}

    @given(st.fixed_dictionaries(
        {"planning_state": st.one_of(st.lists(st.sampled_from([0, 1, True, False]), min_size=K, max_size=K),
                                     st.fixed_dictionaries({k: st.booleans() for k in PLANNING_STATE_SCHEMA})),
         "meta_actions": st.lists(st.sampled_from([a.value for a in VOCABULARY]), min_size=1, max_size=8)},
        optional={"justification": st.one_of(st.text(max_size=10), st.integers()),
                  "answers": st.dictionaries(st.sampled_from(["scene", "plan", "junk"]),
                                             st.one_of(st.text(max_size=5), st.none()), max_size=3),
                  "noise": st.integers()}))
    def test_idempotent(self, raw):
        once = validate_response(raw)
        assert validate_response(once) == once
        assert validate_response(once.to_dict()) == once
        assert 1 <= len(once.meta_actions) <= 4


class _Canned:
    def __init__(self, reply):
        self.reply = reply
        self.sent = []

    def send(self, payload):
        self.sent.append(payload)
        if isinstance(self.reply, Exception):
            raise self.reply
        return self.reply

    def close(self):
        pass


def _external_inputs():
    sc = load_scenario(intersection_path())
    p = prompt_for(sc)
    traj = traj_from_rows([[5, 0, 0, 8], [10, 0, 0, 8]], origin=[0, 0, 0, 8])
    return p, build_visual_prompt(traj, p.ego_box()), traj


class TestExternal:
    cfg = ReasonerConfig(kind="http", url="http://127.0.0.1:1/", timeout_s=0.5)

    def test_config(self):
        with pytest.raises(ValueError):
            ReasonerConfig(kind="grpc")
        with pytest.raises(ValueError):
            ReasonerConfig(kind="http")
        assert ReasonerConfig(kind="subprocess", command="a b").command == ("a", "b")

    def test_wire_format(self):
        p, vp, traj = _external_inputs()
        t = _Canned(json.dumps(VALID).encode())
        ExternalReasoner(self.cfg, transport=t).reason(p, vp, traj)
        req = json.loads(t.sent[0])
        assert req["version"] == "1"
        assert req["questions"] == ["scene", "signs", "objects", "planning_state", "plan"]
        assert set(req) == {"version", "bev_prompt", "visual_prompt", "questions"}
        assert t.sent[0].endswith(b"\n") and t.sent[0].count(b"\n") == 1
        assert req == json.loads(json.dumps(build_request(p, vp)))

    def test_round_trip(self):
        p, vp, traj = _external_inputs()
        r = ExternalReasoner(self.cfg, transport=_Canned(json.dumps(VALID).encode())).reason(p, vp, traj)
        assert r == validate_response(VALID)
        assert r.source == "external"

    @pytest.mark.parametrize("reply", [
        json.dumps(dict(VALID, meta_actions=["Fly"])).encode(),
        json.dumps(dict(VALID, planning_state=[0] * 7)).encode(),
        b"not json",
        b"\xff\xfe",
    ])
    def test_fallback_on_bad_reply(self, reply):
        p, vp, traj = _external_inputs()
        r = ExternalReasoner(self.cfg, transport=_Canned(reply)).reason(p, vp, traj)
        assert r.source == "fallback"
        assert r == rule_based_reason(p, traj)

    def test_fallback_unreachable(self):
        p, vp, traj = _external_inputs()
        r = ExternalReasoner(self.cfg).reason(p, vp, traj)
        assert r.source == "fallback"

    def test_http_server(self):
        body = json.dumps(VALID).encode()
        seen = []

        class Handler(http.server.BaseHTTPRequestHandler):
            def do_POST(self):
                seen.append(json.loads(self.rfile.read(int(self.headers["Content-Length"]))))
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        server = http.server.HTTPServer(("127.0.0.1", 0), Handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            cfg = ReasonerConfig(kind="http", url=f"http://127.0.0.1:{server.server_port}/", timeout_s=5.0)
            p, vp, traj = _external_inputs()
            with ExternalReasoner(cfg) as client:
                r = client.reason(p, vp, traj)
        finally:
            server.shutdown()
            server.server_close()
        assert r.source == "external"
        assert r.meta_actions == (MetaAction.STOP, MetaAction.WAIT)
        assert seen[0]["bev_prompt"]["navigation_command"] == "left"

    def test_subprocess(self, tmp_path):
        script = tmp_path / "echo.py"
        script.write_text(
            "import json, sys\n"
            f"reply = {json.dumps(VALID)!r}\n"
            "for line in sys.stdin:\n"
            "    json.loads(line)\n"
            "    sys.stdout.write(reply + '\\n')\n"
            "    sys.stdout.flush()\n")
        cfg = ReasonerConfig(kind="subprocess", command=(sys.executable, str(script)), timeout_s=10.0)
        p, vp, traj = _external_inputs()
        with ExternalReasoner(cfg) as client:
            first = client.reason(p, vp, traj)
            second = client.reason(p, vp, traj)
        assert first == second == validate_response(VALID)
        assert first.source == "external"

    def test_subprocess_timeout(self, tmp_path):
        script = tmp_path / "slow.py"
        script.write_text("import sys, time\nsys.stdin.readline()\ntime.sleep(30)\n")
        cfg = ReasonerConfig(kind="subprocess", command=(sys.executable, str(script)), timeout_s=0.3)
        p, vp, traj = _external_inputs()
        with ExternalReasoner(cfg) as client:
            r = client.reason(p, vp, traj)
        assert r.source == "fallback"

    def test_subprocess_missing_binary(self):
        cfg = ReasonerConfig(kind="subprocess", command=("/nonexistent/reasoner",), timeout_s=0.3)
        p, vp, traj = _external_inputs()
        with ExternalReasoner(cfg) as client:
            assert client.reason(p, vp, traj).source == "fallback"


class TestTypes:
    def test_state(self):
        with pytest.raises(ValueError):
            PlanningState((0,) * 7)
        with pytest.raises(ValueError):
            PlanningState((2,) + (0,) * 7)
        with pytest.raises(ValueError):
            PlanningState.from_flags(flying=True)
        s = PlanningState.from_flags(red_light=True)
        assert s.red_light == 1 and s["stop_sign"] == 0 and s.any()

    def test_response_bounds(self):
        state = PlanningState()
        with pytest.raises(ValueError):
            ReasonerResponse(state, ())
        with pytest.raises(ValueError):
            ReasonerResponse(state, ("Stop",) * 5)
        assert len(VOCABULARY) == 9
        np.testing.assert_array_equal(state.bits, np.zeros(K))
