"""Domain schemas, world constants and the bundled rule files.

Two scenarios ship with the package: ``industry`` (workplace access control)
and ``recodex`` (job routing between fast and slow evaluation workers).
"""

from __future__ import annotations

from importlib import resources

from .dsl import TypedRuleFile, load
from .dsl.types import EnumT, ListT, Num, Pos2D, RecordT, Schema

WORLD = (316.43506, 177.88289)
GATES = {"WP1": (60.0, 45.0), "WP2": (158.0, 130.0), "WP3": (262.0, 70.0)}
WORKPLACES = tuple(GATES)
SHIFT_STARTS = (21600.0, 50400.0, 79200.0)
SHIFT_LENGTH = 28800.0
EVENT_TYPES = ("TAKE_HGEAR", "RET_HGEAR", "ENTER_GATE", "EXIT_GATE")

INDUSTRY = Schema(
    name="industry",
    enums={"EventType": EVENT_TYPES, "WorkplaceId": WORKPLACES},
    enum_aliases={"RET_HGER": "RET_HGEAR"},
    records={
        "Gate": {"posX": Num("m"), "posY": Num("m")},
        "Workplace": {"id": EnumT("WorkplaceId"), "gate": RecordT("Gate")},
        "Shift": {"start": Num("s"), "end": Num("s"), "workplace": RecordT("Workplace"),
                  "workers": ListT(RecordT("Worker"))},
        "Worker": {"id": Num(), "posX": Num("m"), "posY": Num("m"), "pos": Pos2D("m"),
                   "events": ListT(RecordT("Event")), "workplace": RecordT("Workplace")},
        "Event": {"type": EnumT("EventType"), "time": Num("s")},
    },
    field_aliases={"Shift": {"startTime": "start", "endTime": "end"}},
    param_types={"shift": RecordT("Shift"), "worker": RecordT("Worker"),
                 "workplace": RecordT("Workplace")},
    roots={"worker": RecordT("Worker"), "shifts": ListT(RecordT("Shift"))},
)

RECODEX = Schema(
    name="recodex",
    enums={},
    records={"Job": {"refSolutionDuration": Num("s"), "timeLimit": Num("s")}},
    param_types={"job": RecordT("Job")},
    roots={"job": RecordT("Job")},
)

SCHEMAS = {"industry": INDUSTRY, "recodex": RECODEX}
RELAXATIONS = ("strict", "time-ab", "time-right", "all")
RULE_NAME = {"industry": "AccessToWorkplace", "recodex": "isSlow"}


def industry_env(record: dict) -> dict:
    """Evaluation roots for one industry record."""
    shift = record["shift"]
    worker = dict(record["worker"])
    worker["pos"] = (worker["posX"], worker["posY"])
    worker["workplace"] = shift["workplace"]
    shift_obj = dict(shift, workers=[worker])
    return {"NOW": record["now"], "worker": worker, "shifts": [shift_obj]}


def recodex_env(record: dict) -> dict:
    return {"NOW": 0.0, "job": record["job"]}


ENV_BUILDERS = {"industry": industry_env, "recodex": recodex_env}


def rules_filename(scenario: str, relaxation: str) -> str:
    if scenario == "recodex":
        return "recodex-strict.rules" if relaxation == "strict" else "recodex-relaxed.rules"
    if relaxation not in RELAXATIONS:
        raise ValueError(f"unknown relaxation {relaxation!r}; choose from {', '.join(RELAXATIONS)}")
    return f"industry-{relaxation}.rules"


def rules_source(scenario: str, relaxation: str) -> str:
    return resources.files("rulefuzz.rules").joinpath(rules_filename(scenario, relaxation)).read_text("utf-8")


def bundled(scenario: str, relaxation: str = "strict") -> TypedRuleFile:
    return load(rules_source(scenario, relaxation), SCHEMAS[scenario])
