"""Event-driven model of a multi-core edge computer.

Tasks are admitted first-come first-served into per-class containers. A task
becomes active only if its container has a free worker and its memory fits in
what the active tasks leave free. Active tasks share the cores equally, each
one capped at the speed of a single core.

The model is passive: the caller tells it the current time through
:meth:`SimComputer.submit` and :meth:`SimComputer.advance`, and asks for
:meth:`SimComputer.next_completion` to know when to come back.
"""

from __future__ import annotations

import bisect
import enum
import heapq
import itertools
import math
from dataclasses import dataclass, field

from edgesim.core import LambdaRequest

# Tasks within this fraction of their requirement of the earliest finisher
# complete together; absorbs rounding when completion instants are recomputed.
_TIE_RTOL = 1e-10
_TIME_EPS = 1e-12


class UnknownClassError(KeyError):
    """The computer has no container for the requested lambda class."""


class TimeRegressionError(RuntimeError):
    pass


class CapacityError(ValueError):
    """The task needs more memory than the computer has installed."""


@dataclass(frozen=True)
class ContainerSpec:
    cls: str
    workers: int = 1
    ops_offset: float = 0.0
    ops_slope: float = 0.0
    mem_offset: float = 0.0
    mem_slope: float = 0.0

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError(f"container {self.cls}: workers must be >= 1")
        for name in ("ops_offset", "ops_slope", "mem_offset", "mem_slope"):
            if getattr(self, name) < 0:
                raise ValueError(f"container {self.cls}: {name} must be >= 0")

    def ops(self, input_size: float) -> float:
        return self.ops_offset + self.ops_slope * input_size

    def mem(self, input_size: float) -> float:
        return self.mem_offset + self.mem_slope * input_size


@dataclass(frozen=True)
class ComputerSpec:
    cores: int
    core_speed: float
    memory: float = math.inf
    containers: tuple[ContainerSpec, ...] = ()
    load_window: float = 1.0

    def __post_init__(self):
        if self.cores < 1:
            raise ValueError("cores must be >= 1")
        if self.core_speed <= 0:
            raise ValueError("core_speed must be positive")
        if self.load_window <= 0:
            raise ValueError("load_window must be positive")
        names = [c.cls for c in self.containers]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate containers in {names}")

    def container(self, cls: str) -> ContainerSpec:
        for c in self.containers:
            if c.cls == cls:
                return c
        raise UnknownClassError(cls)

    def offers(self, cls: str) -> bool:
        return any(c.cls == cls for c in self.containers)


class TaskState(enum.Enum):
    WAITING = "Waiting"
    ACTIVE = "Active"
    DONE = "Done"


@dataclass(eq=False)
class Task:
    id: int
    cls: str
    input_size: float
    required_ops: float
    required_mem: float
    arrival_time: float
    remaining_ops: float = field(init=False)
    state: TaskState = TaskState.WAITING
    activation_time: float | None = None
    completion_time: float | None = None
    # (start, end, rate) for every stretch spent active; used by conservation checks
    intervals: list = field(default_factory=list)
    payload: object = None

    def __post_init__(self):
        self.remaining_ops = self.required_ops

    @property
    def processing_time(self) -> float:
        return self.completion_time - self.arrival_time

    @property
    def waiting_time(self) -> float:
        return self.activation_time - self.arrival_time


class SimComputer:
    """Processor-sharing computer with worker and memory admission control."""

    def __init__(self, spec: ComputerSpec, name: str = "computer", record_intervals: bool = False):
        self.spec = spec
        self.name = name
        self.now = 0.0
        self.active: list[Task] = []
        self.waiting: list[Task] = []
        self._workers_busy = {c.cls: 0 for c in spec.containers}
        self._mem_used = 0.0
        self._ids = itertools.count()
        self._finished: list[Task] = []
        self._record_intervals = record_intervals
        self._seg_start = 0.0
        self.busy_core_time = 0.0
        # busy-core steps for reported_load: start time, busy cores from then
        # on, and busy_core_time accumulated up to that instant
        self._h_time = [0.0]
        self._h_busy = [0]
        self._h_area = [0.0]

    # -- rates and projections ---------------------------------------------

    def rate(self, active_count: int | None = None) -> float:
        """Per-task service rate in operations per second."""
        n = len(self.active) if active_count is None else active_count
        if n == 0:
            return 0.0
        return self.spec.core_speed * min(1.0, self.spec.cores / n)

    def busy_cores(self) -> int:
        return min(len(self.active), self.spec.cores)

    def next_completion(self) -> float:
        """Time of the next completion if nothing else arrives (inf when idle)."""
        if not self.active:
            return math.inf
        return self.now + min(t.remaining_ops for t in self.active) / self.rate()

    def projected_completion(self, task_id: int) -> float | None:
        """Completion time of an active task assuming the current rate persists."""
        for t in self.active:
            if t.id == task_id:
                return self.now + t.remaining_ops / self.rate()
        return None

    # -- state changes ------------------------------------------------------

    def submit(self, request: LambdaRequest, now: float, payload=None) -> int:
        container = self.spec.container(request.cls.name)
        if container.mem(request.input_size) > self.spec.memory:
            raise CapacityError(f"{self.name}: {request.cls.name} of {request.input_size} B "
                                f"needs more than {self.spec.memory} B of memory")
        self._advance_to(now)
        task = Task(
            id=next(self._ids),
            cls=container.cls,
            input_size=request.input_size,
            required_ops=container.ops(request.input_size),
            required_mem=container.mem(request.input_size),
            arrival_time=now,
            payload=payload,
        )
        self.waiting.append(task)
        self._admit()
        # zero-op tasks leave immediately
        self._complete_ready()
        return task.id

    def advance(self, now: float) -> list[Task]:
        """Move the clock to ``now``; return tasks completed since the last call."""
        self._advance_to(now)
        done, self._finished = self._finished, []
        return done

    def _advance_to(self, now: float):
        if now < self.now - _TIME_EPS:
            raise TimeRegressionError(f"{self.name}: time went back from {self.now} to {now}")
        while self.active:
            t_next = self.next_completion()
            if t_next > now + _TIME_EPS:
                break
            self._progress(max(t_next, self.now))
            self._complete_ready(force_min=True)
        if now > self.now:
            self._progress(now)

    def _progress(self, t: float):
        dt = t - self.now
        if dt <= 0:
            return
        rate = self.rate()
        work = rate * dt
        for task in self.active:
            task.remaining_ops -= work
        self.busy_core_time += self.busy_cores() * dt
        self.now = t

    def _complete_ready(self, force_min: bool = False):
        if not self.active:
            return
        if force_min:
            # the task(s) whose completion instant we just reached finish exactly
            smallest = min(t.remaining_ops for t in self.active)
            finished = [t for t in self.active
                        if t.remaining_ops <= smallest + _TIE_RTOL * t.required_ops]
        else:
            finished = [t for t in self.active if t.remaining_ops <= 0.0]
        if not finished:
            return
        self._close_segment()
        for task in finished:
            task.remaining_ops = 0.0
            task.state = TaskState.DONE
            task.completion_time = self.now
            self.active.remove(task)
            self._workers_busy[task.cls] -= 1
            self._mem_used -= task.required_mem
            self._finished.append(task)
        if not self.active:
            self._mem_used = 0.0
        self._admit()
        self._complete_ready()

    def _admit(self):
        """Activate waiting tasks in arrival order.

        A task without a free worker is skipped (others may overtake it); a
        task whose memory does not fit blocks every later task.
        """
        admitted = []
        saturated = set()
        n_classes = len(self._workers_busy)
        for task in self.waiting:
            if task.cls in saturated:
                continue
            container = self.spec.container(task.cls)
            if self._workers_busy[task.cls] >= container.workers:
                saturated.add(task.cls)
                if len(saturated) == n_classes:
                    # nobody behind can get a worker either
                    break
                continue
            if self._mem_used + task.required_mem > self.spec.memory:
                break
            admitted.append(task)
            self._workers_busy[task.cls] += 1
            self._mem_used += task.required_mem
        if not admitted:
            self._record_busy()
            return
        self._close_segment()
        for task in admitted:
            self.waiting.remove(task)
            task.state = TaskState.ACTIVE
            task.activation_time = self.now
            self.active.append(task)
        self._record_busy()

    def _close_segment(self):
        """Record the rate each active task enjoyed since the last change."""
        if self._record_intervals and self.active and self.now > self._seg_start:
            rate = self.rate()
            for task in self.active:
                start = max(self._seg_start, task.activation_time)
                if self.now > start:
                    task.intervals.append((start, self.now, rate))
        self._seg_start = self.now

    def _record_busy(self):
        busy = self.busy_cores()
        if self._h_busy[-1] == busy:
            return
        if self._h_time[-1] == self.now:
            for h in (self._h_time, self._h_busy, self._h_area):
                h.pop()
            if self._h_busy and self._h_busy[-1] == busy:
                return
        self._h_time.append(self.now)
        self._h_busy.append(busy)
        self._h_area.append(self.busy_core_time)

    # -- observations -------------------------------------------------------

    def reported_load(self, now: float) -> float:
        """Fraction of core capacity used over the trailing load window."""
        self._advance_to(now)
        window = self.spec.load_window
        start = now - window
        i = bisect.bisect_right(self._h_time, start) - 1
        if i < 0:
            area_before = 0.0
        else:
            area_before = self._h_area[i] + self._h_busy[i] * (start - self._h_time[i])
            if i > 512:
                # steps wholly before the window are never needed again
                for h in (self._h_time, self._h_busy, self._h_area):
                    del h[:i]
        load = (self.busy_core_time - area_before) / (self.spec.cores * window)
        return min(1.0, max(0.0, load))

    def probe_completion(self, request: LambdaRequest, now: float) -> float:
        """Delay until ``request`` would finish if submitted now and nothing else arrived.

        All active tasks progress at the same rate, so the forward run keeps
        one clock of work delivered per task: a task admitted when that clock
        reads ``v`` finishes when it reaches ``v + ops``. Every completion is
        then a heap pop instead of a pass over the active set.
        """
        container = self.spec.container(request.cls.name)
        if container.mem(request.input_size) > self.spec.memory:
            raise CapacityError(f"{self.name}: {request.cls.name} of {request.input_size} B "
                                f"needs more than {self.spec.memory} B of memory")
        self._advance_to(now)
        seq = itertools.count()
        heap = [(t.remaining_ops, next(seq), t.required_ops, t.cls, t.required_mem, False)
                for t in self.active]
        heapq.heapify(heap)
        waiting = [(t.cls, t.required_ops, t.required_mem, False) for t in self.waiting]
        waiting.append((container.cls, container.ops(request.input_size),
                        container.mem(request.input_size), True))
        workers = dict(self._workers_busy)
        limits = {c.cls: c.workers for c in self.spec.containers}
        mem_used = self._mem_used
        head = 0
        clock = 0.0  # work delivered to each active task so far
        t = now

        def admit():
            nonlocal head, mem_used
            saturated = set()
            for i in range(head, len(waiting)):
                item = waiting[i]
                if item is None:
                    if i == head:
                        head += 1
                    continue
                cls, ops, mem, target = item
                if cls in saturated:
                    continue
                if workers[cls] >= limits[cls]:
                    saturated.add(cls)
                    if len(saturated) == len(limits):
                        break
                    continue
                if mem_used + mem > self.spec.memory:
                    break
                workers[cls] += 1
                mem_used += mem
                heapq.heappush(heap, (clock + ops, next(seq), ops, cls, mem, target))
                waiting[i] = None
                if i == head:
                    head += 1

        admit()
        if head < len(waiting) and math.isinf(self.spec.memory):
            # Deep single-class backlog behind a full container: every
            # completion admits the next task, so the active count and the
            # per-task rate stay fixed until the probed task gets in.
            cls = waiting[head][0]
            if (len(heap) == limits[cls] and all(e[3] == cls for e in heap)
                    and all(w is None or w[0] == cls for w in waiting[head:])):
                n = len(heap)
                finishes = [e[0] for e in heap]
                heapq.heapify(finishes)
                backlog = [w[1] for w in waiting[head:] if w is not None]
                for ops in backlog[:-1]:
                    heapq.heapreplace(finishes, finishes[0] + ops)
                admitted = max(clock, finishes[0])
                mine = admitted + backlog[-1]
                heapq.heapreplace(finishes, mine)
                t += (admitted - clock) / self.rate(n)
                # nothing is left to admit: the active set only shrinks now
                prev = admitted
                for finish in sorted(finishes):
                    t += (finish - prev) / self.rate(n)
                    if finish >= mine:
                        return t - now
                    prev = finish
                    n -= 1
        while heap:
            finish = heap[0][0]
            t += max(0.0, finish - clock) / self.rate(len(heap))
            clock = max(clock, finish)
            done = False
            while heap and heap[0][0] <= finish + _TIE_RTOL * heap[0][2]:
                _, _, _, cls, mem, target = heapq.heappop(heap)
                workers[cls] -= 1
                mem_used -= mem
                done = done or target
            if done:
                return t - now
            if not heap:
                mem_used = 0.0
            admit()
        return math.inf

    def _probe_by_replay(self, request: LambdaRequest, now: float) -> float:
        """Reference probe: replays a full copy of the computer step by step."""
        self.spec.container(request.cls.name)
        self._advance_to(now)
        twin = self._clone()
        tid = twin.submit(request, now)
        while True:
            for task in twin._finished:
                if task.id == tid:
                    return task.completion_time - now
            t_next = twin.next_completion()
            if math.isinf(t_next):
                return math.inf
            twin._advance_to(t_next)

    def _clone(self) -> SimComputer:
        twin = SimComputer.__new__(SimComputer)
        twin.spec = self.spec
        twin.name = self.name + "~probe"
        twin.now = self.now
        copies = {}
        for task in itertools.chain(self.active, self.waiting):
            c = Task(task.id, task.cls, task.input_size, task.required_ops,
                     task.required_mem, task.arrival_time)
            c.remaining_ops = task.remaining_ops
            c.state = task.state
            c.activation_time = task.activation_time
            copies[task.id] = c
        twin.active = [copies[t.id] for t in self.active]
        twin.waiting = [copies[t.id] for t in self.waiting]
        twin._workers_busy = dict(self._workers_busy)
        twin._mem_used = self._mem_used
        twin._ids = itertools.count(10**12)
        twin._finished = []
        twin._record_intervals = False
        twin._seg_start = self.now
        twin.busy_core_time = 0.0
        twin._h_time = [self.now]
        twin._h_busy = [self.busy_cores()]
        twin._h_area = [0.0]
        return twin

    @property
    def memory_used(self) -> float:
        return self._mem_used

    def workers_busy(self, cls: str) -> int:
        return self._workers_busy[cls]


def relative_execution_error(actual: float, expected: float) -> float:
    """How much longer (positive) or shorter a run took than expected, as a fraction."""
    if expected <= 0:
        raise ValueError(f"expected time must be positive, got {expected}")
    return actual / expected - 1.0
