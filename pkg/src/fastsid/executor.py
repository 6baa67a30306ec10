"""In-process stand-in for a containerised cluster running a workflow DAG.

Nodes are logical CPU pools. Every task is placed before anything runs
(lowest-load greedy), then tasks are dispatched to one shared thread pool as
soon as their dependencies have completed and their node has spare capacity.
Task bodies exchange data only through the :class:`~fastsid.matstore.BlobStore`.
"""
from __future__ import annotations

import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .dagflow import Image, TaskSpec, WorkflowDag, build_sid_workflow, validate_dag
from .errors import DeadlockDetected, NoNodes, SchemaError, TaskFailed
from .hankel import build_hankel_set
from .matstore import BlobKey, BlobStore
from .n4sid import Diagnostics, IdentificationResult, SidConfig, finish_identification, svd_stage_from_triple
from .plantsim import IoRecord, StateSpaceModel
from .projection import oblique_project
from .tsvd import BlockPlan, SvdTriple, block_merge, block_svd


class Phase(str, Enum):
    PENDING = "Pending"
    SCHEDULED = "Scheduled"
    RUNNING = "Running"
    COMPLETED = "Completed"
    FAILED = "Failed"


_LEGAL = {
    Phase.PENDING: {Phase.SCHEDULED},
    Phase.SCHEDULED: {Phase.RUNNING, Phase.FAILED},  # FAILED: cancelled after an upstream failure
    Phase.RUNNING: {Phase.COMPLETED, Phase.FAILED},
    Phase.COMPLETED: set(),
    Phase.FAILED: set(),
}

STAGE_OF_IMAGE = {
    Image.INI: "oblique", Image.A: "oblique", Image.B: "oblique",
    Image.C: "svd", Image.D: "svd", Image.E: "estimation",
}


@dataclass
class NodeState:
    id: str
    capacity: float
    load: float = 0.0
    assigned: list[str] = field(default_factory=list)


def make_cluster(nodes: int, cpus: float) -> list[NodeState]:
    return [NodeState(f"node-{i + 1}", float(cpus)) for i in range(nodes)]


def schedule(tasks, nodes: list[NodeState]) -> dict[str, str]:
    """Greedy lowest-load placement, in the given task order.

    ``tasks`` holds :class:`TaskSpec` objects or ``(task_id, request)`` pairs.
    Each task goes to the node with the smallest current load (ties go to the
    lowest index) and that node's load grows by the request. ``nodes`` are
    updated in place; the returned map is ``task_id -> node_id``.
    """
    if not nodes:
        raise NoNodes("cannot schedule onto an empty cluster")
    placement = {}
    for task in tasks:
        tid, request = (task.id, task.cpu) if isinstance(task, TaskSpec) else task
        idx = min(range(len(nodes)), key=lambda i: (nodes[i].load, i))
        node = nodes[idx]
        node.load += request
        node.assigned.append(tid)
        placement[tid] = node.id
    return placement


@dataclass(frozen=True)
class TaskEvent:
    timestamp: float
    task_id: str
    previous: Phase
    phase: Phase


@dataclass
class TaskState:
    id: str
    phase: Phase = Phase.PENDING
    node: str | None = None
    start_time: float | None = None
    end_time: float | None = None
    error: BaseException | None = None


class StateTracker:
    """Thread-safe record of every phase transition of a run."""

    def __init__(self, task_ids):
        self._lock = threading.Lock()
        self.states = {tid: TaskState(tid) for tid in task_ids}
        self._events: list[TaskEvent] = []

    def transition(self, tid: str, phase: Phase, **updates) -> TaskEvent:
        with self._lock:
            st = self.states[tid]
            if phase not in _LEGAL[st.phase]:
                raise RuntimeError(f"illegal transition {st.phase.value} -> {phase.value} for {tid}")
            ev = TaskEvent(time.perf_counter(), tid, st.phase, phase)
            st.phase = phase
            for k, v in updates.items():
                setattr(st, k, v)
            self._events.append(ev)
            return ev

    def events(self) -> list[TaskEvent]:
        with self._lock:
            return list(self._events)

    def phase(self, tid: str) -> Phase:
        with self._lock:
            return self.states[tid].phase


@dataclass
class RunReport:
    makespan: float
    per_task: dict[str, tuple[str, float]]
    per_stage: dict[str, float]
    schedule: dict[str, list[str]]
    phases: dict[str, Phase]
    peak_running: int = 0
    namespace: str = ""

    @property
    def failed(self) -> list[str]:
        return [tid for tid, ph in self.phases.items() if ph is Phase.FAILED]

    def to_dict(self) -> dict:
        return {
            "namespace": self.namespace,
            "makespan_s": round(self.makespan, 4),
            "per_task": {tid: {"node": node, "duration_s": round(d, 4)}
                         for tid, (node, d) in self.per_task.items()},
            "per_stage_s": {k: round(v, 4) for k, v in self.per_stage.items()},
            "schedule": self.schedule,
            "phases": {tid: ph.value for tid, ph in self.phases.items()},
            "peak_running": self.peak_running,
        }


@dataclass
class TaskContext:
    """What a task body may touch: the store (inside its run namespace) and its params."""

    store: BlobStore
    namespace: str
    task: TaskSpec
    params: dict

    def key(self, name: str) -> BlobKey:
        return BlobKey(self.namespace, name)

    def get(self, name: str) -> np.ndarray:
        return self.store.get(self.key(name))

    def put(self, name: str, m) -> None:
        self.store.put(self.key(name), m)

    def put_triple(self, label: str, t: SvdTriple) -> None:
        self.put(f"{label}.U", t.U)
        self.put(f"{label}.S", t.S[None, :])
        self.put(f"{label}.V", t.V)

    def get_triple(self, label: str) -> SvdTriple:
        return SvdTriple(self.get(f"{label}.U"), self.get(f"{label}.S")[0], self.get(f"{label}.V"))


Body = Callable[[TaskContext], None]


class RunHandle:
    """A workflow run executing on a background thread."""

    def __init__(self, w: WorkflowDag, cluster: list[NodeState], store: BlobStore,
                 bodies: dict, namespace: str, latency_ms: float, max_workers: int | None):
        self.order = validate_dag(w)
        missing = {t.image for t in w.tasks.values()} - set(bodies)
        if missing:
            raise SchemaError(f"no task body registered for images {sorted(i.value for i in missing)}")
        self.w = w
        self.store = store
        self.bodies = bodies
        self.namespace = namespace
        self.latency = latency_ms / 1000.0
        self.max_workers = max_workers or w.mpt
        self.tracker = StateTracker(self.order)
        self.cluster = cluster
        self.placement = schedule([w.tasks[t] for t in self.order], cluster)
        capacity = {n.id: n.capacity for n in cluster}
        for tid, nid in self.placement.items():
            if w.tasks[tid].cpu > capacity[nid]:
                raise SchemaError(f"{tid} requests {w.tasks[tid].cpu} CPU, node {nid} has {capacity[nid]}")
        for tid in self.order:
            self.tracker.transition(tid, Phase.SCHEDULED, node=self.placement[tid])

        self._cond = threading.Condition()
        self._report: RunReport | None = None
        self._error: BaseException | None = None
        self._thread = threading.Thread(target=self._drive, name=f"run-{namespace}", daemon=True)
        self._thread.start()

    def _run_task(self, tid: str):
        task = self.w.tasks[tid]
        ctx = TaskContext(self.store, self.namespace, task, {**self.w.params, **task.params})
        self.tracker.transition(tid, Phase.RUNNING, start_time=time.perf_counter())
        try:
            # one simulated transfer per incoming edge
            if self.latency > 0:
                for _ in task.deps:
                    time.sleep(self.latency)
            self.bodies[task.image](ctx)
        except BaseException as exc:  # noqa: BLE001 - any failure is recorded, not propagated
            self.tracker.transition(tid, Phase.FAILED, end_time=time.perf_counter(), error=exc)
        else:
            self.tracker.transition(tid, Phase.COMPLETED, end_time=time.perf_counter())
        with self._cond:
            self._cond.notify_all()

    def _drive(self):
        try:
            self._report = self._execute()
        except BaseException as exc:  # noqa: BLE001
            self._error = exc
        with self._cond:
            self._cond.notify_all()

    def _execute(self) -> RunReport:
        w, tr = self.w, self.tracker
        node_free = {n.id: n.capacity for n in self.cluster}
        waiting = list(self.order)
        running: set[str] = set()
        peak = 0
        failed_root = None
        t0 = time.perf_counter()
        with ThreadPoolExecutor(max_workers=self.max_workers, thread_name_prefix="sid-task") as pool:
            with self._cond:
                while True:
                    for tid in [t for t in running if tr.phase(t) in (Phase.COMPLETED, Phase.FAILED)]:
                        running.discard(tid)
                        node_free[self.placement[tid]] += w.tasks[tid].cpu
                        if tr.phase(tid) is Phase.FAILED and failed_root is None:
                            failed_root = tid
                    if failed_root is not None:
                        self._cancel_descendants(failed_root, waiting)
                        if not running:
                            break
                    else:
                        for tid in list(waiting):
                            if len(running) >= self.max_workers:
                                break
                            task = w.tasks[tid]
                            node = self.placement[tid]
                            if all(tr.phase(d) is Phase.COMPLETED for d in task.deps) \
                                    and node_free[node] >= task.cpu:
                                waiting.remove(tid)
                                running.add(tid)
                                node_free[node] -= task.cpu
                                pool.submit(self._run_task, tid)
                        peak = max(peak, len(running))
                        if not waiting and not running:
                            break
                        if not running:
                            raise DeadlockDetected(f"no runnable task among {waiting}")
                    self._cond.wait(timeout=0.5)
        starts = [st.start_time for st in tr.states.values() if st.start_time is not None]
        ends = [st.end_time for st in tr.states.values() if st.end_time is not None]
        makespan = max(ends) - min(starts) if starts and ends else time.perf_counter() - t0
        report = self._build_report(makespan, peak)
        if failed_root is not None:
            exc = TaskFailed(failed_root, tr.states[failed_root].error)
            exc.report = report
            raise exc
        return report

    def _cancel_descendants(self, root: str, waiting: list[str]):
        dependents = self.w.dependents()
        stack = list(dependents[root])
        seen = set()
        while stack:
            tid = stack.pop()
            if tid in seen:
                continue
            seen.add(tid)
            if self.tracker.phase(tid) is Phase.SCHEDULED:
                self.tracker.transition(tid, Phase.FAILED)
                if tid in waiting:
                    waiting.remove(tid)
            stack.extend(dependents[tid])
        # nothing else starts once the run is aborting
        waiting.clear()

    def _build_report(self, makespan: float, peak: int) -> RunReport:
        per_task, per_stage = {}, {s: 0.0 for s in ("oblique", "svd", "estimation")}
        for tid, st in self.tracker.states.items():
            if st.start_time is not None and st.end_time is not None:
                d = st.end_time - st.start_time
                per_task[tid] = (st.node, d)
                per_stage[STAGE_OF_IMAGE[self.w.tasks[tid].image]] += d
        sched = {n.id: [t for t in self.order if self.placement[t] == n.id] for n in self.cluster}
        return RunReport(makespan=makespan, per_task=per_task, per_stage=per_stage, schedule=sched,
                         phases={tid: st.phase for tid, st in self.tracker.states.items()},
                         peak_running=peak, namespace=self.namespace)

    def wait(self, timeout: float | None = None) -> RunReport:
        self._thread.join(timeout)
        if self._thread.is_alive():
            raise TimeoutError("workflow still running")
        if self._error is not None:
            raise self._error
        return self._report

    @property
    def done(self) -> bool:
        return not self._thread.is_alive()


def start_workflow(w: WorkflowDag, cluster: list[NodeState], store: BlobStore, bodies: dict,
                   namespace: str | None = None, latency_ms: float = 0.0,
                   max_workers: int | None = None) -> RunHandle:
    return RunHandle(w, cluster, store, bodies, namespace or uuid.uuid4().hex[:12],
                     latency_ms, max_workers)


def run_workflow(w: WorkflowDag, cluster: list[NodeState], store: BlobStore, bodies: dict,
                 namespace: str | None = None, latency_ms: float = 0.0,
                 max_workers: int | None = None) -> RunReport:
    """Execute ``w`` and block until it finishes.

    Raises :class:`TaskFailed` (with the partial report on ``.report``) when
    any task body raises.
    """
    return start_workflow(w, cluster, store, bodies, namespace, latency_ms, max_workers).wait()


def track_states(handle: RunHandle) -> list[TaskEvent]:
    """Snapshot of the transitions recorded so far, oldest first."""
    return handle.tracker.events()


# --- SID task bodies -------------------------------------------------------

def _sid_cfg(params: dict) -> SidConfig:
    return SidConfig(N=params["N"], j=params["j"], order=params.get("order"),
                     order_tol=params.get("order_tol", 1e-6),
                     svd_complete=params.get("svd_complete", True))


def _input_record(ctx: TaskContext) -> IoRecord:
    return IoRecord(u=ctx.get("input.u"), y=ctx.get("input.y"))


def _body_ini(ctx: TaskContext):
    cfg = _sid_cfg(ctx.params)
    h = build_hankel_set(_input_record(ctx), cfg.N, cfg.j)
    for name, M in h.matrices().items():
        ctx.put(f"hankel.{name}", M)


def _body_a(ctx: TaskContext):
    Oi = oblique_project(ctx.get("hankel.Yf"), ctx.get("hankel.Uf"), ctx.get("hankel.Wp"))
    ctx.put("O_i", Oi)
    plan = BlockPlan.for_parallelism(Oi.shape[1], ctx.params["slices"])
    for k, (lo, hi) in enumerate(plan.bounds()):
        ctx.put(f"O_i.slice.{k}", Oi[:, lo:hi])


def _body_b(ctx: TaskContext):
    Oim1 = oblique_project(ctx.get("hankel.YfMinus"), ctx.get("hankel.UfMinus"), ctx.get("hankel.WpPlus"))
    ctx.put("O_im1", Oim1)


def _body_c(ctx: TaskContext):
    block = ctx.get(f"O_i.slice.{ctx.params['slice']}")
    ctx.put_triple(ctx.task.id, block_svd(block, complete=ctx.params.get("svd_complete", True)))


def _body_d(ctx: TaskContext):
    left, right = ctx.task.deps
    ctx.put_triple(ctx.task.id, block_merge(ctx.get_triple(left), ctx.get_triple(right)))


def _body_e(ctx: TaskContext):
    cfg = _sid_cfg(ctx.params)
    local: dict[str, SvdTriple] = {}

    def triple(label):
        return local[label] if label in local else ctx.get_triple(label)

    for out, left, right in ctx.params["merges"]:
        local[out] = block_merge(triple(left), triple(right))
    final = triple(ctx.params["result"])
    stage = svd_stage_from_triple(final, cfg)
    rec = _input_record(ctx)
    model, residual, cond, _ = finish_identification(rec, cfg, stage, ctx.get("O_i"), ctx.get("O_im1"))
    for name in "ABCD":
        ctx.put(f"model.{name}", getattr(model, name))
    ctx.put("model.singular_values", final.S[None, :])
    ctx.put("model.order", [[stage.order]])
    ctx.put("model.residual", [[residual]])
    ctx.put("model.condition", [[cond]])


SID_BODIES: dict[Image, Body] = {
    Image.INI: _body_ini, Image.A: _body_a, Image.B: _body_b,
    Image.C: _body_c, Image.D: _body_d, Image.E: _body_e,
}


def identify_workflow(rec: IoRecord, cfg: SidConfig, P: int, nodes: int = 4, cpus: float = 16,
                      latency_ms: float = 0.0, store: BlobStore | None = None,
                      namespace: str | None = None, cpu_svd: float = 1.0,
                      max_workers: int | None = None) -> tuple[IdentificationResult, RunReport]:
    """Identify ``rec`` by running the SID workflow on a simulated cluster."""
    store = BlobStore() if store is None else store
    namespace = namespace or uuid.uuid4().hex[:12]
    w = build_sid_workflow(P, cfg, cpu_svd=cpu_svd, cpu_merge=cpu_svd)
    store.put(BlobKey(namespace, "input.u"), rec.u)
    store.put(BlobKey(namespace, "input.y"), rec.y)
    report = run_workflow(w, make_cluster(nodes, cpus), store, SID_BODIES, namespace,
                          latency_ms, max_workers)

    def get(name):
        return store.get(BlobKey(namespace, name))

    model = StateSpaceModel(*(get(f"model.{x}") for x in "ABCD"))
    diag = Diagnostics(stage_times=dict(report.per_stage), total_time=report.makespan,
                       singular_values=get("model.singular_values")[0].copy(),
                       residual=float(get("model.residual")[0, 0]),
                       condition=float(get("model.condition")[0, 0]))
    result = IdentificationResult(model=model, order=int(get("model.order")[0, 0]), diagnostics=diag)
    return result, report
