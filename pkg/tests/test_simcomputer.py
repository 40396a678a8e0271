import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgesim.core import LambdaClass, LambdaRequest
from edgesim.simcomputer import (CapacityError, ComputerSpec, ContainerSpec, SimComputer,
                                 TaskState, TimeRegressionError, UnknownClassError,
                                 relative_execution_error)
from oracles import fixed_step_completions

A, B = LambdaClass("a"), LambdaClass("b")


def req(ops, cls=A, t=0.0):
    # containers below use ops_slope = 1, so the input size is the op count
    return LambdaRequest(cls, ops, "c", t)


def computer(cores=1, speed=100.0, workers=2, memory=math.inf, mem_slope=0.0, **kw):
    spec = ComputerSpec(cores, speed, memory,
                        (ContainerSpec("a", workers, 0.0, 1.0, 0.0, mem_slope),
                         ContainerSpec("b", workers, 0.0, 1.0, 0.0, mem_slope)), **kw)
    return SimComputer(spec, record_intervals=True)


def run_to_end(sc):
    done = []
    while math.isfinite(sc.next_completion()):
        done += sc.advance(sc.next_completion())
    return done


def test_single_task_full_core():
    sc = computer()
    tid = sc.submit(req(100), 0.0)
    assert sc.projected_completion(tid) == pytest.approx(1.0)
    assert sc.next_completion() == pytest.approx(1.0)


def test_two_tasks_share_one_core():
    sc = computer()
    sc.submit(req(100), 0.0)
    assert sc.advance(0.5) == []
    sc.submit(req(100), 0.5)
    done = run_to_end(sc)
    assert [t.completion_time for t in done] == pytest.approx([1.5, 2.0], abs=1e-12)


def test_rates():
    sc = computer(cores=2, workers=4)
    sc.submit(req(100), 0.0)
    sc.submit(req(100), 0.0)
    assert sc.rate() == 100.0
    sc = computer(cores=1, workers=4)
    for _ in range(4):
        sc.submit(req(100), 0.0)
    assert sc.rate() == 25.0


def test_worker_limit_makes_task_wait():
    sc = computer(workers=2)
    ids = [sc.submit(req(100), t) for t in (0.0, 0.1, 0.2)]
    states = {t.id: t.state for t in sc.active + sc.waiting}
    assert states[ids[2]] is TaskState.WAITING
    assert sc.workers_busy("a") == 2


def test_other_container_bypasses_worker_block():
    sc = computer(workers=1)
    sc.submit(req(100, A), 0.0)
    sc.submit(req(100, A), 0.0)
    sc.submit(req(100, B), 0.0)
    assert sorted(t.cls for t in sc.active) == ["a", "b"]


def test_memory_blocks_everything_behind():
    sc = computer(workers=4, memory=10.0, mem_slope=0.1)
    sc.submit(req(60), 0.0)      # 6 B
    sc.submit(req(50, B), 0.0)   # 5 B: does not fit
    sc.submit(req(10), 0.0)      # 1 B would fit, but is behind
    assert len(sc.active) == 1 and len(sc.waiting) == 2


def test_capacity_error_when_never_fits():
    sc = computer(memory=1.0, mem_slope=1.0)
    with pytest.raises(CapacityError):
        sc.submit(req(5), 0.0)


def test_unknown_class():
    sc = computer()
    with pytest.raises(UnknownClassError):
        sc.submit(req(5, LambdaClass("zzz")), 0.0)
    with pytest.raises(UnknownClassError):
        sc.probe_completion(req(5, LambdaClass("zzz")), 0.0)


def test_time_regression():
    sc = computer()
    sc.submit(req(10), 1.0)
    with pytest.raises(TimeRegressionError):
        sc.advance(0.5)


def test_zero_op_task_leaves_at_once():
    spec = ComputerSpec(1, 100.0, containers=(ContainerSpec("a", 1, 0.0, 0.0),))
    sc = SimComputer(spec)
    sc.submit(req(10), 2.0)
    assert [t.completion_time for t in sc.advance(2.0)] == [2.0]


def test_reported_load():
    sc = computer(load_window=1.0)
    assert sc.reported_load(5.0) == 0.0
    sc = computer(load_window=1.0)
    sc.submit(req(30), 0.7)
    assert sc.reported_load(1.7) == pytest.approx(0.3, abs=1e-12)
    sc = computer(cores=1, workers=2, load_window=1.0)
    sc.submit(req(1000), 0.0)
    assert sc.reported_load(2.0) == 1.0


def test_probe_examples():
    sc = computer()
    assert sc.probe_completion(req(100), 0.0) == pytest.approx(1.0)
    sc.submit(req(50), 0.0)
    # shared until the resident leaves after 1 s, then 50 ops alone
    assert sc.probe_completion(req(100), 0.0) == pytest.approx(1.5, abs=1e-12)
    # the real state is untouched
    assert len(sc.active) == 1 and sc.active[0].remaining_ops == 50


def test_probe_includes_waiting_for_a_worker():
    sc = computer(workers=1)
    sc.submit(req(100), 0.0)
    assert sc.probe_completion(req(100), 0.0) == pytest.approx(2.0)


def test_relative_execution_error():
    assert relative_execution_error(3.0, 3.0) == 0.0
    assert relative_execution_error(1.1, 1.0) == pytest.approx(0.1)
    assert relative_execution_error(2.0, 4.0) == -0.5
    with pytest.raises(ValueError):
        relative_execution_error(1.0, 0.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        ContainerSpec("a", 0)
    with pytest.raises(ValueError):
        ContainerSpec("a", 1, ops_slope=-1)
    with pytest.raises(ValueError):
        ComputerSpec(0, 1.0)
    with pytest.raises(ValueError):
        ComputerSpec(1, 1.0, containers=(ContainerSpec("a"), ContainerSpec("a")))


# -- properties ---------------------------------------------------------------
# Random instances: two containers with random cost coefficients, tasks with
# random arrival, class and input size. Ops and memory vary per task through
# the coefficients, exactly as configured computers do.

coef_st = st.tuples(st.floats(0.0, 50.0), st.floats(0.0, 3.0),   # ops offset, slope
                    st.floats(0.0, 4.0), st.floats(0.0, 0.05))   # mem offset, slope
instance_st = st.fixed_dictionaries({
    "cores": st.integers(1, 3),
    "workers": st.integers(1, 3),
    "memory": st.sampled_from([math.inf, 6.0, 10.0]),
    "coef": st.tuples(coef_st, coef_st),
    "tasks": st.lists(st.tuples(st.floats(0.0, 3.0), st.integers(1, 100), st.integers(0, 1)),
                      min_size=1, max_size=8),
})


def build(inst, speed=100.0):
    spec = ComputerSpec(inst["cores"], speed, inst["memory"],
                        tuple(ContainerSpec(c, inst["workers"], *inst["coef"][i])
                              for i, c in enumerate("ab")))
    return SimComputer(spec, record_intervals=True)


def submit_all(sc, tasks, check=None):
    """Submit (time, size, container index) tasks in time order; run to the end."""
    ids, finished = {}, []
    order = sorted(range(len(tasks)), key=lambda i: tasks[i][0])
    for i in order:
        t, size, c = tasks[i]
        finished += sc.advance(t)
        try:
            ids[sc.submit(req(size, (A, B)[c], t), t)] = i
        except CapacityError:
            continue
        if check:
            check(sc)
    while math.isfinite(sc.next_completion()):
        finished += sc.advance(sc.next_completion())
        if check:
            check(sc)
    # zero-op tasks finish inside submit and are reported by the next advance
    finished += sc.advance(sc.now)
    return ids, finished


def admission_ok(sc):
    assert sum(t.required_mem for t in sc.active) <= sc.spec.memory + 1e-9
    for c in sc.spec.containers:
        assert sum(t.cls == c.cls for t in sc.active) <= c.workers
    # memory head-of-line: once the earliest task that has a free worker is
    # held back, nothing that arrived after it was let in at this instant
    held = [t for t in sc.waiting
            if sc.workers_busy(t.cls) < sc.spec.container(t.cls).workers]
    if held:
        head = held[0]
        assert not any(t.id > head.id and t.activation_time == sc.now for t in sc.active)


@settings(max_examples=150, deadline=None)
@given(instance_st)
def test_admission_limits_hold(inst):
    submit_all(build(inst), inst["tasks"], admission_ok)


@settings(max_examples=150, deadline=None)
@given(instance_st)
def test_work_conservation(inst):
    ids, finished = submit_all(build(inst), inst["tasks"])
    assert len(finished) == len(ids)
    for t in finished:
        served = sum((end - start) * rate for start, end, rate in t.intervals)
        assert served == pytest.approx(t.required_ops, rel=1e-9, abs=1e-9)
        assert t.remaining_ops == 0.0


@settings(max_examples=150, deadline=None)
@given(instance_st, st.integers(1, 100), st.integers(0, 1), st.floats(0.0, 3.0))
def test_probe_matches_actual_completion(inst, size, c, now):
    sc = build(inst)
    for t, s, k in sorted(inst["tasks"]):
        if t > now:
            break
        try:
            sc.submit(req(s, (A, B)[k], t), t)
        except CapacityError:
            pass
    probe = req(size, (A, B)[c], now)
    try:
        predicted = sc.probe_completion(probe, now)
    except CapacityError:
        return
    reference = sc._probe_by_replay(probe, now)
    tid = sc.submit(probe, now)
    done = sc.advance(now)
    while math.isfinite(sc.next_completion()):
        done += sc.advance(sc.next_completion())
    actual = next(t.completion_time for t in done if t.id == tid) - now
    assert predicted == pytest.approx(actual, rel=1e-9, abs=1e-12)
    assert reference == pytest.approx(actual, rel=1e-9, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3),
       st.lists(st.tuples(st.floats(0, 0.5), st.integers(1, 60)), min_size=1, max_size=40),
       st.integers(1, 60))
def test_probe_deep_backlog(workers, cores, arrivals, size):
    spec = ComputerSpec(cores, 10.0, containers=(ContainerSpec("a", workers, 0.5, 1.0),))
    sc = SimComputer(spec)
    t = 0.0
    for gap, s in arrivals:
        t += gap
        sc.submit(req(s, A, t), t)
    fast = sc.probe_completion(req(size, A, t), t)
    slow = sc._probe_by_replay(req(size, A, t), t)
    assert fast == pytest.approx(slow, rel=1e-9)


def oracle_instance(inst, dt):
    """Arrivals snapped to the integrator grid, with ops and memory per task."""
    steps, ops, mem, cont = [], [], [], []
    for t, size, c in inst["tasks"]:
        spec = inst["coef"][c]
        steps.append(int(round(t / dt)))
        ops.append(spec[0] + spec[1] * size)
        mem.append(spec[2] + spec[3] * size)
        cont.append(c)
    return steps, ops, mem, cont


@settings(max_examples=40, deadline=None)
@given(instance_st.filter(lambda i: i["cores"] <= 2 and len(i["tasks"]) <= 5))
def test_matches_fixed_step_oracle(inst):
    dt = 1e-5
    # fast computer so that the integrator runs a few thousand steps at most
    speed = 2000.0
    inst = {**inst, "tasks": [(round(t * 0.1, 3), s, c) for t, s, c in inst["tasks"]]}
    steps, ops, mem, cont = oracle_instance(inst, dt)
    fits = [m <= inst["memory"] for m in mem]
    tasks = [(s * dt, x[1], x[2]) for s, x, ok in zip(steps, inst["tasks"], fits) if ok]
    if not tasks:
        return
    ids, done = submit_all(build(inst, speed), tasks)
    got = np.full(len(tasks), np.nan)
    for t in done:
        got[ids[t.id]] = t.completion_time
    keep = [i for i, ok in enumerate(fits) if ok]
    ref = fixed_step_completions(
        [inst["cores"]], [speed], [inst["memory"]], [[inst["workers"]] * 2],
        [[steps[i] for i in keep]], [[ops[i] for i in keep]], [[mem[i] for i in keep]],
        [[cont[i] for i in keep]], dt=dt)[0]
    assert np.allclose(got, ref, atol=1e-4, rtol=0)
