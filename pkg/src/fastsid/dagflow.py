"""Workflow model for the identification pipeline and its JSON template format.

The SID workflow for SVD parallelism ``P``::

    Ini -> A (O_i, sliced into P column blocks) -> P x C (block SVD)
        -> D merge tree -> E (final merges + state estimation + solve)
    Ini -> B (O_{i-1}) -----------------------------------^

The merge tree follows :func:`fastsid.tsvd.merge_plan`; the last two merges
are done inside the export task rather than as separate D tasks.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from graphlib import CycleError, TopologicalSorter

from .errors import CycleDetected, DanglingDependency, InvalidParallelism, SchemaError, TemplateSyntaxError
from .tsvd import merge_plan

TEMPLATE_VERSION = 1

# merges performed by the export task instead of standalone D tasks
FOLDED_MERGES = 2


class Image(str, Enum):
    INI = "Ini"
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    E = "E"


IMAGE_FUNCTIONS = {
    Image.INI: "prepare Hankel matrices from the input record",
    Image.A: "oblique projection O_i, split into column slices",
    Image.B: "oblique projection O_{i-1}",
    Image.C: "truncated SVD of one O_i slice",
    Image.D: "merge-and-truncate of two parent SVDs",
    Image.E: "remaining merges, order selection, state estimation, least-squares model",
}


@dataclass(frozen=True)
class TaskSpec:
    id: str
    image: Image
    level: int
    deps: tuple[str, ...] = ()
    params: dict = field(default_factory=dict, compare=True, hash=False)
    cpu: float = 1.0

    def __post_init__(self):
        # canonical float so templates round-trip byte for byte
        object.__setattr__(self, "cpu", float(self.cpu))

    def to_dict(self) -> dict:
        return {"id": self.id, "image": self.image.value, "level": self.level,
                "deps": list(self.deps), "params": self.params, "cpu": self.cpu}


@dataclass(frozen=True)
class WorkflowDag:
    tasks: dict[str, TaskSpec]
    params: dict = field(default_factory=dict)

    @property
    def edges(self) -> list[tuple[str, str]]:
        return [(d, t.id) for t in self.tasks.values() for d in t.deps]

    @property
    def mpt(self) -> int:
        """Widest level, i.e. the most tasks that can be in flight together."""
        widths = Counter(t.level for t in self.tasks.values())
        return max(widths.values()) if widths else 0

    def by_image(self, image: Image) -> list[TaskSpec]:
        return [t for t in self.tasks.values() if t.image == image]

    @property
    def entry_task(self) -> str:
        return self.by_image(Image.INI)[0].id

    @property
    def export_task(self) -> str:
        return self.by_image(Image.E)[0].id

    def task_count(self, include_ini: bool = False) -> int:
        n = len(self.tasks)
        return n if include_ini else n - len(self.by_image(Image.INI))

    def dependents(self) -> dict[str, list[str]]:
        out = {tid: [] for tid in self.tasks}
        for a, b in self.edges:
            if a in out:
                out[a].append(b)
        return out


def build_sid_workflow(P: int, cfg=None, *, cpu_svd: float = 1.0, cpu_merge: float = 1.0,
                       cpu_default: float = 1.0) -> WorkflowDag:
    """Emit the SID workflow with ``P`` parallel block-SVD tasks.

    ``cfg`` (a :class:`fastsid.n4sid.SidConfig`) only feeds the workflow-level
    parameters; the graph shape depends on ``P`` alone.
    """
    if not isinstance(P, int) or P < 1:
        raise InvalidParallelism(f"parallelism must be a positive integer, got {P!r}")

    tasks: list[TaskSpec] = []
    counter = iter(range(1, 10**9))

    def new_id():
        return f"task-{next(counter)}"

    ini = TaskSpec("task-ini", Image.INI, 0, (), {}, cpu_default)
    a = TaskSpec(new_id(), Image.A, 1, (ini.id,), {"slices": P}, cpu_default)
    b = TaskSpec(new_id(), Image.B, 1, (ini.id,), {}, cpu_default)
    tasks += [ini, a, b]

    # merge-tree labels: leaves 0..P-1 map to C tasks, later labels to merges
    producer: dict[int, TaskSpec] = {}
    for k in range(P):
        c = TaskSpec(new_id(), Image.C, 2, (a.id,), {"slice": k}, cpu_svd)
        producer[k] = c
        tasks.append(c)

    merges = [(rnd, m) for rnd, ms in enumerate(merge_plan(P)) for m in ms]
    n_fold = min(FOLDED_MERGES, len(merges))
    standalone, folded = merges[:len(merges) - n_fold], merges[len(merges) - n_fold:]

    for rnd, (out, left, right) in standalone:
        d = TaskSpec(new_id(), Image.D, 3 + rnd, (producer[left].id, producer[right].id), {}, cpu_merge)
        producer[out] = d
        tasks.append(d)

    folded_labels = {out for _, (out, _, _) in folded}
    fan_in: list[str] = []
    steps = []

    def ref(label):
        if label in folded_labels:
            return f"merge:{label}"
        tid = producer[label].id
        if tid not in fan_in:
            fan_in.append(tid)
        return tid

    for _, (out, left, right) in folded:
        steps.append([f"merge:{out}", ref(left), ref(right)])
    result = f"merge:{folded[-1][1][0]}" if folded else ref(0)

    deps = (a.id, b.id, *fan_in)
    by_id = {t.id: t for t in tasks}
    level = max(by_id[d].level for d in deps) + 1
    e = TaskSpec(new_id(), Image.E, level, deps, {"merges": steps, "result": result}, cpu_default)
    tasks.append(e)

    params = {"P": P}
    if cfg is not None:
        params.update(N=cfg.N, j=cfg.j, order=cfg.order, order_tol=cfg.order_tol,
                      svd_complete=cfg.svd_complete)
    return WorkflowDag({t.id: t for t in tasks}, params)


def validate_dag(w: WorkflowDag) -> list[str]:
    """Check structure and return a topological order (by level, then insertion)."""
    ids = list(w.tasks)
    for t in w.tasks.values():
        for d in t.deps:
            if d not in w.tasks:
                raise DanglingDependency(f"{t.id} depends on unknown task {d!r}")
    try:
        TopologicalSorter({t.id: t.deps for t in w.tasks.values()}).prepare()
    except CycleError as exc:
        raise CycleDetected(f"cycle through {exc.args[1]}") from exc
    for t in w.tasks.values():
        for d in t.deps:
            if w.tasks[d].level >= t.level:
                raise SchemaError(f"{t.id} (level {t.level}) depends on {d} at level {w.tasks[d].level}")
    for image in (Image.INI, Image.E):
        count = len(w.by_image(image))
        if count != 1:
            raise SchemaError(f"workflow needs exactly one {image.value} task, found {count}")
    dependents = w.dependents()
    sinks = [tid for tid, ds in dependents.items() if not ds]
    if sinks != [w.export_task]:
        raise SchemaError(f"export task must be the only sink, sinks are {sinks}")
    position = {tid: i for i, tid in enumerate(ids)}
    return sorted(ids, key=lambda tid: (w.tasks[tid].level, position[tid]))


def emit_template(w: WorkflowDag) -> str:
    doc = {
        "version": TEMPLATE_VERSION,
        "mpt": w.mpt,
        "params": w.params,
        "tasks": [t.to_dict() for t in w.tasks.values()],
    }
    return json.dumps(doc, indent=2) + "\n"


_TASK_FIELDS = {"id": str, "image": str, "level": int, "deps": list}


def parse_template(doc: str) -> WorkflowDag:
    try:
        raw = json.loads(doc)
    except json.JSONDecodeError as exc:
        raise TemplateSyntaxError(exc.msg, line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise SchemaError("template must be a JSON object")
    if raw.get("version") != TEMPLATE_VERSION:
        raise SchemaError(f"unsupported template version {raw.get('version')!r}")
    entries = raw.get("tasks")
    if not isinstance(entries, list):
        raise SchemaError("template is missing the 'tasks' list")

    tasks: dict[str, TaskSpec] = {}
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise SchemaError(f"tasks[{i}] is not an object")
        for name, kind in _TASK_FIELDS.items():
            if name not in entry:
                raise SchemaError(f"tasks[{i}] is missing field {name!r}")
            if not isinstance(entry[name], kind) or isinstance(entry[name], bool):
                raise SchemaError(f"tasks[{i}].{name} must be {kind.__name__}")
        try:
            image = Image(entry["image"])
        except ValueError:
            raise SchemaError(f"tasks[{i}] has unknown image kind {entry['image']!r}") from None
        cpu = entry.get("cpu", 1.0)
        if not isinstance(cpu, (int, float)) or isinstance(cpu, bool) or cpu <= 0:
            raise SchemaError(f"tasks[{i}].cpu must be a positive number")
        params = entry.get("params", {})
        if not isinstance(params, dict):
            raise SchemaError(f"tasks[{i}].params must be an object")
        if entry["id"] in tasks:
            raise SchemaError(f"duplicate task id {entry['id']!r}")
        tasks[entry["id"]] = TaskSpec(entry["id"], image, entry["level"], tuple(entry["deps"]),
                                      params, float(cpu))

    w = WorkflowDag(tasks, raw.get("params", {}))
    if "mpt" in raw and raw["mpt"] != w.mpt:
        raise SchemaError(f"declared mpt {raw['mpt']} disagrees with level widths ({w.mpt})")
    return w
