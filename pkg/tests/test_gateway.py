import json
import threading
import urllib.request

import pytest

from burstsim import Scenario, Simulation
from burstsim.gateway import GatewayService, make_server
from burstsim.workload import Trace

from conftest import make_sim, unit_apps


@pytest.fixture
def gw():
    service = GatewayService(make_sim(4, vms=2, policy="AlwaysHpc", apps=unit_apps()))
    service.register_defaults()
    return service


def submit(gw, t=None, **doc):
    doc.setdefault("app", "app")
    doc.setdefault("parameters", {"nodes": 1, "req_walltime_s": 100})
    headers = {} if t is None else {"X-Sim-Time": str(t)}
    return gw.handle("POST", "/v1/jobs", headers, json.dumps(doc))


def test_registries(gw):
    status, systems = gw.handle("GET", "/v1/systems")
    assert status == 200 and {s["id"] for s in systems} == {"hpc", "cloud"}
    assert gw.handle("POST", "/v1/systems", body={"id": "hpc2", "kind": "hpc"})[0] == 201
    assert gw.handle("POST", "/v1/systems", body={"id": "hpc2", "kind": "hpc"})[0] == 409
    assert gw.handle("POST", "/v1/systems", body={"id": "x", "kind": "grid"})[0] == 400
    assert gw.handle("POST", "/v1/storage", body={"id": "scratch", "root_path": "/scratch"})[0] == 201
    assert gw.handle("POST", "/v1/apps", body={"id": "app2", "name": "app", "version": "2", "profile": "app"})[0] == 201
    assert gw.handle("POST", "/v1/apps", body={"id": "app3", "name": "app", "version": "2", "profile": "app"})[0] == 409
    assert gw.handle("POST", "/v1/apps", body={"id": "app4", "profile": "nope"})[0] == 400
    assert gw.handle("DELETE", "/v1/apps")[0] == 405
    assert gw.handle("GET", "/v2/apps")[0] == 404


def test_submit_validation(gw):
    assert submit(gw, app="ghost")[0] == 404
    code, doc = submit(gw, parameters={"nodes": 0, "req_walltime_s": 10})
    assert code == 400 and doc["code"] == 400 and "error" in doc
    assert submit(gw, parameters={"nodes": 1})[0] == 400
    assert submit(gw, target="nowhere")[0] == 404
    assert gw.handle("POST", "/v1/jobs", body="{not json")[0] == 400
    assert gw.handle("GET", "/v1/jobs/none")[0] == 404
    assert gw.handle("GET", "/v1/jobs", {"X-Sim-Time": "soon"})[0] == 400


def test_blocking_submit_finishes_with_provenance(gw):
    code, doc = submit(gw, id="a", inputs={"deck": "in.tpr"})
    assert code == 201 and doc["status"] == "FINISHED"
    prov = doc["provenance"]
    assert prov["start_time_s"] == 0 and prov["end_time_s"] == 100
    assert prov["chosen_system"] == "hpc" and prov["policy"] == "AlwaysHpc"
    assert prov["inputs"] == {"deck": "in.tpr"} and "app_version" in prov
    assert submit(gw, id="a")[0] == 409


def test_stepped_status_moves_forward_only(gw):
    code, doc = submit(gw, t=0, id="s", parameters={"nodes": 4, "req_walltime_s": 50, "base_runtime_s": 50})
    assert doc["status"] == "SUBMITTED"
    assert gw.handle("GET", "/v1/jobs/s", {"X-Sim-Time": "0"})[1]["status"] == "RUNNING"
    assert gw.handle("GET", "/v1/jobs/s", {"X-Sim-Time": "50"})[1]["status"] == "FINISHED"
    assert gw.handle("GET", "/v1/jobs/s", {"X-Sim-Time": "10"})[0] == 400


def test_cancel_pending_and_running(gw):
    submit(gw, t=0, id="run", parameters={"nodes": 4, "req_walltime_s": 100})
    submit(gw, t=0, id="wait", parameters={"nodes": 4, "req_walltime_s": 100})
    code, doc = gw.handle("POST", "/v1/jobs/run/cancel", {"X-Sim-Time": "5"})
    assert code == 200 and doc["cancelled"] is False and doc["job"]["status"] == "RUNNING"
    code, doc = gw.handle("POST", "/v1/jobs/wait/cancel", {"X-Sim-Time": "5"})
    assert doc["cancelled"] is True and doc["job"]["status"] == "CANCELLED"
    assert gw.handle("GET", "/v1/jobs/wait", {"X-Sim-Time": "500"})[1]["status"] == "CANCELLED"


def test_pinned_target_goes_to_that_system(gw):
    code, doc = submit(gw, id="c", target="cloud", parameters={"nodes": 2, "req_walltime_s": 30, "base_runtime_s": 30})
    assert doc["provenance"]["cluster_kind"] == "cloud" and doc["status"] == "FINISHED"


def test_listing_jobs(gw):
    submit(gw, id="a")
    submit(gw, id="b")
    code, docs = gw.handle("GET", "/v1/jobs")
    assert code == 200 and [d["id"] for d in docs] == ["a", "b"]


def test_http_server_round_trip():
    service = GatewayService(Simulation.from_scenario(Scenario.load("default"), trace=Trace([])))
    service.register_defaults()
    server = make_server(service, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}/v1"
    try:
        body = json.dumps({"app": "NAMD", "id": "n1", "parameters": {"nodes": 8, "req_walltime_s": 600}}).encode()
        req = urllib.request.Request(base + "/jobs", data=body, method="POST", headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req) as resp:
            doc = json.load(resp)
            assert resp.status == 201
        assert doc["status"] == "FINISHED" and doc["provenance"]["end_time_s"] == 160
        with pytest.raises(urllib.error.HTTPError) as err:
            urllib.request.urlopen(base + "/jobs/missing")
        assert err.value.code == 404
    finally:
        server.shutdown()
        server.server_close()


def gateway_replay(scenario):
    """Submit the scenario trace through the API at each job's submit time and drain the simulation."""
    trace = scenario.build_trace()
    sim = Simulation.from_scenario(scenario, trace=Trace([]), strict=True)
    service = GatewayService(sim, blocking=False)
    service.register_defaults()
    system = {"hpc": sim.hpc.name, "cloud": sim.cloud.name}
    for j in trace.jobs:
        doc = {"id": j.id, "app": j.app, "user": j.user, "target": system.get(j.cluster_hint, "auto"),
               "parameters": {"nodes": j.nodes, "tasks_per_node": j.tasks_per_node,
                              "req_walltime_s": j.req_walltime_s, "base_runtime_s": j.base_runtime_s}}
        code, _ = service.handle("POST", "/v1/jobs", {"X-Sim-Time": str(j.submit_time)}, json.dumps(doc))
        assert code == 201
    service.handle("GET", "/v1/jobs", {"X-Sim-Time": str(scenario.horizon_s - 1)})
    return sim, service


def test_gateway_submission_is_transparent():
    scenario = Scenario.load("default")
    direct = Simulation.from_scenario(scenario, strict=True).run()
    sim, service = gateway_replay(scenario)
    assert sim.log.to_jsonl() == direct.log.to_jsonl()
    for r in direct.records:
        prov = service.jobs[r.job_id].to_dict()["provenance"]
        assert (prov["start_time_s"], prov["end_time_s"]) == (r.start_s, r.end_s)
