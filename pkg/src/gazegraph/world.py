"""Symbolic household world: objects, activity programs, executor and videos.

A program is a list of atomic actions (verb + object). The executor applies
precondition/effect rules to a :class:`WorldState`; activity templates emit
programs together with a goal that the final state has to satisfy. Synthetic
videos time-align each program to frames, lay the room out for a camera and
attach a human-like scanpath (fixate the current action's object, look ahead
near the end of each action, occasional distractors).
"""
from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ContractError, FormatError, VocabularyError

ROOMS = ("kitchen", "living_room", "bedroom", "bathroom")

VERBS = ("walk", "grab", "put", "open", "close", "sit", "standup",
         "switchon", "switchoff", "touch", "read", "type_on")

# name -> (room, properties). Furniture anchors the agent; items live on or in
# an anchor. "fixed" items never move but sit at an anchor.
FURNITURE = {
    "fridge": ("kitchen", {"container", "openable"}),
    "cabinet": ("kitchen", {"container", "openable"}),
    "microwave": ("kitchen", {"container", "openable", "switch"}),
    "stove": ("kitchen", {"surface", "switch"}),
    "sink": ("kitchen", {"surface", "switch"}),
    "kitchen_table": ("kitchen", {"surface"}),
    "coffee_maker": ("kitchen", {"surface", "switch"}),
    "sofa": ("living_room", {"surface", "sittable"}),
    "tv": ("living_room", {"switch"}),
    "coffee_table": ("living_room", {"surface"}),
    "bookshelf": ("living_room", {"surface"}),
    "bed": ("bedroom", {"surface", "sittable"}),
    "desk": ("bedroom", {"surface"}),
    "closet": ("bedroom", {"container", "openable"}),
    "toilet": ("bathroom", {"sittable"}),
    "faucet": ("bathroom", {"surface", "switch"}),
}

ITEMS = {
    "cereal": ("cabinet", {"grabbable"}),
    "milk": ("fridge", {"grabbable"}),
    "fork": ("kitchen_table", {"grabbable"}),
    "knife": ("kitchen_table", {"grabbable"}),
    "spoon": ("kitchen_table", {"grabbable"}),
    "plate": ("kitchen_table", {"grabbable"}),
    "water_glass": ("cabinet", {"grabbable"}),
    "mug": ("cabinet", {"grabbable"}),
    "remote_control": ("sofa", {"grabbable"}),
    "book": ("bookshelf", {"grabbable", "readable"}),
    "cellphone": ("coffee_table", {"grabbable"}),
    "computer": ("desk", {"fixed", "switch"}),
    "keyboard": ("desk", {"grabbable", "typeable"}),
    "mouse": ("desk", {"grabbable"}),
    "chair": ("desk", {"fixed", "sittable"}),
    "pillow": ("bed", {"grabbable"}),
    "clothes": ("bed", {"grabbable"}),
    "towel": ("faucet", {"grabbable"}),
    "toothbrush": ("faucet", {"grabbable"}),
}

SCENERY = ("character", "floor", "wall")

OBJECT_VOCAB: tuple[str, ...] = tuple(sorted(FURNITURE) + sorted(ITEMS) + list(SCENERY))
assert len(OBJECT_VOCAB) == 38

HEATERS = {"microwave", "stove", "coffee_maker"}
WASHERS = {"sink", "faucet"}
HELD = "@held"


def props(obj: str) -> set:
    if obj in FURNITURE:
        return FURNITURE[obj][1]
    if obj in ITEMS:
        return ITEMS[obj][1]
    return set()


def room_of_anchor(anchor: str) -> str:
    return FURNITURE[anchor][0]


# ---------------------------------------------------------------------------
# atomic actions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class AtomicAction:
    verb: str
    obj: str | None = None
    obj2: str | None = None

    def __post_init__(self):
        if self.verb not in VERBS:
            raise VocabularyError(f"unknown verb {self.verb!r}")
        if self.verb == "put" and self.obj2 is None:
            raise ContractError("put takes two objects")
        if self.verb != "put" and self.obj2 is not None:
            raise ContractError(f"{self.verb} takes one object")
        if self.verb != "standup" and self.obj is None:
            raise ContractError(f"{self.verb} needs an object")

    @property
    def token(self) -> str:
        return " ".join(p for p in (self.verb, self.obj, self.obj2) if p)

    @classmethod
    def parse(cls, text: str) -> "AtomicAction":
        parts = text.split()
        if not 1 <= len(parts) <= 3:
            raise FormatError(f"cannot parse action {text!r}")
        return cls(*parts)

    def __str__(self):
        return self.token


def A(text: str) -> AtomicAction:
    return AtomicAction.parse(text)


def _build_action_vocab() -> tuple[str, ...]:
    toks = set()
    anchors = list(FURNITURE)
    for o in list(FURNITURE) + list(ITEMS):
        toks.add(f"walk {o}")
        p = props(o)
        if "grabbable" in p:
            toks.add(f"grab {o}")
            toks.add(f"touch {o}")
            for dst in anchors:
                if props(dst) & {"surface", "container"}:
                    toks.add(f"put {o} {dst}")
        if "openable" in p:
            toks.update({f"open {o}", f"close {o}"})
        if "switch" in p:
            toks.update({f"switchon {o}", f"switchoff {o}"})
        if "sittable" in p:
            toks.add(f"sit {o}")
        if "readable" in p:
            toks.add(f"read {o}")
        if "typeable" in p:
            toks.add(f"type_on {o}")
        if o in FURNITURE or "fixed" in p:
            toks.add(f"touch {o}")
    toks.add("standup")
    return tuple(sorted(toks))


ACTION_VOCAB: tuple[str, ...] = _build_action_vocab()
ACTION_INDEX = {t: i for i, t in enumerate(ACTION_VOCAB)}


# ---------------------------------------------------------------------------
# world state and executor
# ---------------------------------------------------------------------------

@dataclass
class WorldState:
    room: str = "living_room"
    anchor: str = "sofa"
    holding: str | None = None
    location: dict = field(default_factory=lambda: {k: v[0] for k, v in ITEMS.items()})
    opened: set = field(default_factory=set)
    powered: set = field(default_factory=set)
    posture: str = "standing"
    seat: str | None = None
    touched: set = field(default_factory=set)
    read: set = field(default_factory=set)
    typed: set = field(default_factory=set)
    heated: set = field(default_factory=set)
    washed: set = field(default_factory=set)
    sat_on: set = field(default_factory=set)

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)

    def anchor_of(self, obj: str) -> str:
        if obj in FURNITURE:
            return obj
        loc = self.location.get(obj)
        return self.anchor if loc == HELD else loc

    def room_of(self, obj: str) -> str:
        return room_of_anchor(self.anchor_of(obj))


def initial_state() -> WorldState:
    return WorldState()


class ActionFailed(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def _require(cond: bool, reason: str):
    if not cond:
        raise ActionFailed(f"precondition: {reason}")


def _known(obj: str | None):
    if obj not in FURNITURE and obj not in ITEMS:
        raise ActionFailed(f"precondition: unknown object {obj!r}")


def _apply(state: WorldState, act: AtomicAction) -> None:
    v, o = act.verb, act.obj
    if v == "standup":
        _require(state.posture == "sitting", "not sitting")
        state.posture, state.seat = "standing", None
        return
    _known(o)
    p = props(o)
    near = state.anchor_of(o) == state.anchor and state.room == state.room_of(o)
    if v == "walk":
        _require(state.posture == "standing", "sitting")
        state.anchor = state.anchor_of(o)
        state.room = room_of_anchor(state.anchor)
    elif v == "grab":
        _require("grabbable" in p, f"{o} cannot be grabbed")
        _require(state.holding != o, f"already holding {o}")
        _require(state.holding is None, "hands full")
        _require(near, f"not near {o}")
        loc = state.location[o]
        _require(not ("openable" in props(loc) and loc not in state.opened), f"{o} inside closed {loc}")
        state.holding = o
        state.location[o] = HELD
    elif v == "put":
        dst = act.obj2
        _require(state.holding == o, f"not holding {o}")
        _known(dst)
        _require(dst in FURNITURE and props(dst) & {"surface", "container"}, f"cannot put onto {dst}")
        _require(state.anchor == dst, f"not near {dst}")
        _require(not ("openable" in props(dst) and dst not in state.opened), f"{dst} is closed")
        state.location[o] = dst
        state.holding = None
        if dst in HEATERS and dst in state.powered:
            state.heated.add(o)
        if dst in WASHERS and dst in state.powered:
            state.washed.add(o)
    elif v in ("open", "close"):
        _require("openable" in p, f"{o} cannot be opened")
        _require(near, f"not near {o}")
        if v == "open":
            _require(o not in state.opened, "already open")
            state.opened.add(o)
        else:
            _require(o in state.opened, "already closed")
            state.opened.discard(o)
    elif v in ("switchon", "switchoff"):
        _require("switch" in p, f"{o} has no switch")
        _require(near, f"not near {o}")
        if v == "switchon":
            _require(o not in state.powered, "already on")
            state.powered.add(o)
            for item, loc in state.location.items():
                if loc == o and o in HEATERS:
                    state.heated.add(item)
                if loc == o and o in WASHERS:
                    state.washed.add(item)
        else:
            _require(o in state.powered, "already off")
            state.powered.discard(o)
    elif v == "sit":
        _require("sittable" in p, f"cannot sit on {o}")
        _require(near, f"not near {o}")
        _require(state.posture == "standing", "already sitting")
        state.posture, state.seat = "sitting", o
        state.sat_on.add(o)
    elif v == "touch":
        _require(near or state.holding == o, f"not near {o}")
        state.touched.add(o)
        loc = state.location.get(o)
        if loc in WASHERS and loc in state.powered:
            state.washed.add(o)
    elif v == "read":
        _require("readable" in p, f"{o} cannot be read")
        _require(state.holding == o, f"not holding {o}")
        state.read.add(o)
    elif v == "type_on":
        _require("typeable" in p, f"cannot type on {o}")
        _require(near, f"not near {o}")
        _require("computer" in state.powered, "computer is off")
        state.typed.add(o)


@dataclass
class ExecutionResult:
    success: bool
    state: WorldState
    failed_index: int | None = None
    reason: str | None = None


def execute(program: Sequence, initial: WorldState | None = None) -> ExecutionResult:
    """Run actions in order; stop at the first violated precondition."""
    state = (initial or initial_state()).copy()
    for i, act in enumerate(program):
        if not isinstance(act, AtomicAction):
            act = A(act) if isinstance(act, str) else act
        try:
            _apply(state, act)
        except ActionFailed as exc:
            return ExecutionResult(False, state, i, exc.reason)
    return ExecutionResult(True, state)


# ---------------------------------------------------------------------------
# goals
# ---------------------------------------------------------------------------

def _fact_holds(state: WorldState, fact: tuple) -> bool:
    kind, *args = fact
    if kind == "at":
        return state.location.get(args[0]) == args[1]
    if kind == "closed":
        return args[0] not in state.opened
    if kind == "off":
        return args[0] not in state.powered
    if kind == "on":
        return args[0] in state.powered
    if kind == "sitting":
        return state.posture == "sitting" and state.seat == args[0]
    if kind == "standing":
        return state.posture == "standing"
    if kind == "hands_free":
        return state.holding is None
    if kind in ("touched", "read", "typed", "heated", "washed", "sat_on"):
        return args[0] in getattr(state, kind)
    raise FormatError(f"unknown goal fact {kind!r}")


@dataclass(frozen=True)
class Goal:
    facts: tuple

    def satisfied(self, state: WorldState) -> bool:
        return all(_fact_holds(state, f) for f in self.facts)

    def __str__(self):
        return "; ".join(" ".join(f) for f in self.facts)

    @classmethod
    def parse(cls, text: str) -> "Goal":
        facts = tuple(tuple(part.split()) for part in text.split(";") if part.strip())
        return cls(facts)


def _as_action(item) -> AtomicAction:
    if isinstance(item, AtomicAction):
        return item
    if isinstance(item, str):
        return A(item)
    return A(ACTION_VOCAB[int(item)])


def program_succeeds(prefix: Sequence, suffix: Sequence, goal: Goal, initial: WorldState | None = None) -> bool:
    """Execute prefix + suffix and check the goal on the final state."""
    res = execute([_as_action(a) for a in list(prefix) + list(suffix)], initial)
    return res.success and goal.satisfied(res.state)


def success_rate(samples: Sequence, suffixes: Sequence) -> float:
    """Fraction of (program, n_viewed) samples whose observed prefix plus predicted suffix reaches the goal.

    Suffix items may be AtomicActions, action strings or token indices.
    """
    if len(samples) != len(suffixes):
        raise ContractError(f"{len(samples)} samples but {len(suffixes)} predicted suffixes")
    if not samples:
        raise ContractError("success rate of an empty test set")
    wins = sum(program_succeeds(prog.actions[:viewed], suffix, prog.goal)
               for (prog, viewed), suffix in zip(samples, suffixes))
    return wins / len(samples)


# ---------------------------------------------------------------------------
# activity templates
# ---------------------------------------------------------------------------

def _fillers(rng, room: str, n_max: int) -> list[str]:
    pool = sorted(f for f, (r, _) in FURNITURE.items() if r == room)
    out = []
    for _ in range(int(rng.integers(0, n_max + 1))):
        f = pool[int(rng.integers(len(pool)))]
        out += [f"walk {f}", f"touch {f}"]
    return out


def _t_cutlery(rng):
    items = list(rng.permutation(["fork", "knife", "spoon"]))[: int(rng.integers(2, 4))]
    acts = ["walk kitchen_table", f"grab {items[0]}"]
    if rng.random() < 0.5:
        acts += ["walk sink", "switchon sink", f"touch {items[0]}", "switchoff sink"]
    acts += ["walk cabinet", "open cabinet", f"put {items[0]} cabinet"]
    for it in items[1:]:
        acts += ["walk kitchen_table", f"grab {it}", "walk cabinet", f"put {it} cabinet"]
    acts.append("close cabinet")
    facts = [("at", it, "cabinet") for it in items] + [("closed", "cabinet")]
    return acts, facts


def _t_wash_dishes(rng):
    items = ["plate"] + (["mug"] if rng.random() < 0.5 else [])
    acts = []
    if "mug" in items:
        acts += ["walk cabinet", "open cabinet", "grab mug", "walk sink", "put mug sink"]
    acts += ["walk kitchen_table", "grab plate", "walk sink", "put plate sink", "switchon sink"]
    acts += [f"touch {it}" for it in items]
    acts += ["switchoff sink"]
    opened = "mug" in items
    for it in items:
        acts += [f"grab {it}", "walk cabinet"] + ([] if opened else ["open cabinet"]) + [f"put {it} cabinet"]
        opened = True
        if it != items[-1]:
            acts.append("walk sink")
    acts.append("close cabinet")
    facts = [("at", it, "cabinet") for it in items] + [("washed", "plate"), ("off", "sink"), ("closed", "cabinet")]
    return acts, facts


def _t_breakfast(rng):
    cereal = ["walk cabinet", "open cabinet", "grab cereal", "close cabinet", "walk kitchen_table", "put cereal kitchen_table"]
    milk = ["walk fridge", "open fridge", "grab milk", "close fridge", "walk kitchen_table", "put milk kitchen_table"]
    acts = cereal + milk if rng.random() < 0.5 else milk + cereal
    facts = [("at", "cereal", "kitchen_table"), ("at", "milk", "kitchen_table"), ("closed", "fridge"), ("closed", "cabinet")]
    if rng.random() < 0.5:
        acts += ["grab spoon", "touch cereal", "put spoon kitchen_table"]
        facts += [("touched", "cereal"), ("at", "spoon", "kitchen_table")]
    return acts, facts


def _t_coffee(rng):
    acts = ["walk cabinet", "open cabinet", "grab mug", "close cabinet", "walk coffee_maker",
            "put mug coffee_maker", "switchon coffee_maker"]
    if rng.random() < 0.5:
        acts.append("touch coffee_maker")
    acts += ["switchoff coffee_maker", "grab mug", "walk kitchen_table", "put mug kitchen_table"]
    facts = [("at", "mug", "kitchen_table"), ("heated", "mug"), ("off", "coffee_maker"), ("closed", "cabinet")]
    if rng.random() < 0.5:
        acts += ["walk fridge", "open fridge", "grab milk", "close fridge", "walk kitchen_table", "put milk kitchen_table"]
        facts += [("at", "milk", "kitchen_table"), ("closed", "fridge")]
    return acts, facts


def _t_heat_food(rng):
    acts = []
    if rng.random() < 0.5:
        acts += ["walk fridge", "open fridge", "touch milk", "close fridge"]
    acts += ["walk kitchen_table", "grab plate", "walk microwave", "open microwave", "put plate microwave",
             "close microwave", "switchon microwave"]
    if rng.random() < 0.5:
        acts.append("touch microwave")
    acts += ["switchoff microwave", "open microwave", "grab plate", "close microwave",
             "walk kitchen_table", "put plate kitchen_table"]
    facts = [("at", "plate", "kitchen_table"), ("heated", "plate"), ("off", "microwave"), ("closed", "microwave")]
    return acts, facts


def _t_drink(rng):
    acts = ["walk cabinet", "open cabinet", "grab water_glass", "close cabinet", "walk sink",
            "switchon sink", "put water_glass sink", "switchoff sink", "grab water_glass", "touch water_glass"]
    if rng.random() < 0.5:
        acts.append("touch water_glass")
    acts += ["walk kitchen_table", "put water_glass kitchen_table"]
    facts = [("at", "water_glass", "kitchen_table"), ("washed", "water_glass"), ("touched", "water_glass"), ("off", "sink")]
    return acts, facts


def _t_cook(rng):
    acts = ["walk fridge", "open fridge", "grab milk", "close fridge", "walk stove", "put milk stove", "switchon stove"]
    if rng.random() < 0.5:
        acts.append("touch milk")
    acts += ["switchoff stove", "grab milk"]
    facts = [("heated", "milk"), ("off", "stove")]
    if rng.random() < 0.5:
        acts += ["walk fridge", "open fridge", "put milk fridge", "close fridge"]
        facts += [("at", "milk", "fridge"), ("closed", "fridge")]
    else:
        acts += ["walk kitchen_table", "put milk kitchen_table"]
        facts += [("at", "milk", "kitchen_table")]
    return acts, facts


def _t_read_book(rng):
    acts = ["walk bookshelf", "grab book", "walk sofa", "sit sofa", "read book"]
    if rng.random() < 0.5:
        acts.append("read book")
    acts += ["standup", "walk coffee_table", "put book coffee_table"]
    facts = [("read", "book"), ("at", "book", "coffee_table")]
    if rng.random() < 0.5:
        acts += ["grab cellphone", "walk bookshelf", "put cellphone bookshelf"]
        facts.append(("at", "cellphone", "bookshelf"))
    return acts, facts


def _t_watch_tv(rng):
    acts = ["walk sofa", "grab remote_control", "walk tv", "switchon tv", "walk sofa", "sit sofa", "touch remote_control"]
    if rng.random() < 0.5:
        acts.append("touch remote_control")
    acts += ["standup", "walk tv", "switchoff tv", "walk sofa", "put remote_control sofa"]
    facts = [("touched", "remote_control"), ("off", "tv"), ("at", "remote_control", "sofa"), ("sat_on", "sofa")]
    return acts, facts


def _t_use_phone(rng):
    acts = []
    facts = []
    if rng.random() < 0.5:
        acts += ["walk tv", "switchon tv"]
        facts.append(("on", "tv"))
    acts += ["walk coffee_table", "grab cellphone", "walk sofa", "sit sofa", "touch cellphone"]
    if rng.random() < 0.5:
        acts.append("touch cellphone")
    acts += ["standup", "walk coffee_table", "put cellphone coffee_table"]
    facts += [("touched", "cellphone"), ("at", "cellphone", "coffee_table"), ("standing",)]
    return acts, facts


def _t_tidy(rng):
    acts = ["walk sofa", "grab remote_control", "walk coffee_table", "put remote_control coffee_table",
            "grab cellphone", "walk bookshelf", "put cellphone bookshelf"]
    facts = [("at", "remote_control", "coffee_table"), ("at", "cellphone", "bookshelf")]
    if rng.random() < 0.5:
        acts += ["grab book", "walk coffee_table", "put book coffee_table"]
        facts.append(("at", "book", "coffee_table"))
    return acts, facts


def _t_work(rng):
    acts = ["walk desk", "switchon computer", "sit chair", "type_on keyboard", "touch mouse", "type_on keyboard"]
    if rng.random() < 0.5:
        acts += ["touch mouse", "type_on keyboard"]
    acts += ["standup", "switchoff computer"]
    facts = [("typed", "keyboard"), ("off", "computer"), ("standing",)]
    return acts, facts


def _t_browse(rng):
    acts = ["walk desk", "switchon computer", "sit chair", "touch mouse", "touch computer"]
    if rng.random() < 0.5:
        acts += ["touch mouse", "touch computer"]
    acts += ["standup", "grab mouse", "put mouse desk", "switchoff computer"]
    facts = [("touched", "mouse"), ("touched", "computer"), ("off", "computer"), ("at", "mouse", "desk")]
    return acts, facts


def _t_sleep(rng):
    acts = ["walk bed", "grab clothes", "walk desk", "put clothes desk", "walk bed", "grab pillow", "touch pillow",
            "put pillow bed"]
    if rng.random() < 0.5:
        acts = ["walk desk", "switchon computer", "switchoff computer"] + acts
    acts += ["sit bed"]
    facts = [("at", "clothes", "desk"), ("touched", "pillow"), ("at", "pillow", "bed"), ("sitting", "bed")]
    return acts, facts


def _t_clothes(rng):
    acts = ["walk bed", "grab clothes", "walk closet", "open closet", "put clothes closet"]
    facts = [("at", "clothes", "closet"), ("closed", "closet")]
    if rng.random() < 0.5:
        acts += ["walk bed", "grab pillow", "walk closet", "put pillow closet"]
        facts.append(("at", "pillow", "closet"))
    if rng.random() < 0.5:
        acts += ["touch closet"]
    acts.append("close closet")
    return acts, facts


def _t_brush(rng):
    acts = ["walk faucet", "switchon faucet", "grab toothbrush", "touch toothbrush"]
    if rng.random() < 0.5:
        acts.append("touch toothbrush")
    acts += ["put toothbrush faucet", "switchoff faucet", "grab towel", "touch towel", "put towel faucet"]
    facts = [("washed", "toothbrush"), ("at", "toothbrush", "faucet"), ("touched", "towel"), ("at", "towel", "faucet"),
             ("off", "faucet")]
    return acts, facts


def _t_toilet(rng):
    acts = ["walk toilet", "sit toilet", "standup", "walk faucet", "switchon faucet", "touch faucet"]
    if rng.random() < 0.5:
        acts.append("touch faucet")
    acts += ["switchoff faucet", "grab towel", "touch towel", "put towel faucet"]
    facts = [("sat_on", "toilet"), ("touched", "towel"), ("at", "towel", "faucet"), ("off", "faucet")]
    return acts, facts


def _t_wash_hands(rng):
    acts = ["walk faucet", "switchon faucet", "touch faucet", "touch faucet"]
    if rng.random() < 0.5:
        acts.append("touch faucet")
    acts += ["switchoff faucet", "grab towel", "touch towel"]
    if rng.random() < 0.5:
        acts.append("touch towel")
    acts.append("put towel faucet")
    facts = [("touched", "faucet"), ("touched", "towel"), ("at", "towel", "faucet"), ("off", "faucet")]
    return acts, facts


@dataclass(frozen=True)
class ActivityTemplate:
    name: str
    room: str
    build: Callable


ACTIVITY_TEMPLATES: tuple[ActivityTemplate, ...] = (
    ActivityTemplate("put_cutlery_in_cabinet", "kitchen", _t_cutlery),
    ActivityTemplate("wash_dishes", "kitchen", _t_wash_dishes),
    ActivityTemplate("prepare_breakfast", "kitchen", _t_breakfast),
    ActivityTemplate("make_coffee", "kitchen", _t_coffee),
    ActivityTemplate("heat_food", "kitchen", _t_heat_food),
    ActivityTemplate("drink_water", "kitchen", _t_drink),
    ActivityTemplate("cook_on_stove", "kitchen", _t_cook),
    ActivityTemplate("read_book", "living_room", _t_read_book),
    ActivityTemplate("watch_tv", "living_room", _t_watch_tv),
    ActivityTemplate("use_phone", "living_room", _t_use_phone),
    ActivityTemplate("tidy_living_room", "living_room", _t_tidy),
    ActivityTemplate("work_on_computer", "bedroom", _t_work),
    ActivityTemplate("browse_internet", "bedroom", _t_browse),
    ActivityTemplate("go_to_sleep", "bedroom", _t_sleep),
    ActivityTemplate("put_clothes_in_closet", "bedroom", _t_clothes),
    ActivityTemplate("brush_teeth", "bathroom", _t_brush),
    ActivityTemplate("use_toilet", "bathroom", _t_toilet),
    ActivityTemplate("wash_hands", "bathroom", _t_wash_hands),
)
ACTIVITY_NAMES = tuple(t.name for t in ACTIVITY_TEMPLATES)


@dataclass
class ActivityProgram:
    activity: int
    actions: list
    goal: Goal
    camera: int = 0

    @property
    def name(self) -> str:
        return ACTIVITY_NAMES[self.activity]

    @property
    def rooms(self) -> list[str]:
        """Rooms visited, in order of first appearance."""
        state = initial_state()
        seen = []
        for act in self.actions:
            _apply(state, act)
            if state.room not in seen:
                seen.append(state.room)
        return seen

    @property
    def tokens(self) -> list[int]:
        return [ACTION_INDEX[a.token] for a in self.actions]


def make_program(activity: int, rng: np.random.Generator, filler_max: int = 3, camera: int = 0) -> ActivityProgram:
    tpl = ACTIVITY_TEMPLATES[activity]
    body, facts = tpl.build(rng)
    acts = [A(a) for a in _fillers(rng, tpl.room, filler_max) + body]
    return ActivityProgram(activity, acts, Goal(tuple(facts)), camera)


def write_program(path, program: ActivityProgram) -> None:
    lines = [
        f"# activity: {program.name}",
        f"# camera: {program.camera}",
        f"# goal: {program.goal}",
    ] + [a.token for a in program.actions]
    Path(path).write_text("\n".join(lines) + "\n")


def read_program(path) -> ActivityProgram:
    header, acts = {}, []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            header[key.strip()] = val.strip()
        else:
            acts.append(A(line))
    try:
        activity = ACTIVITY_NAMES.index(header["activity"])
        return ActivityProgram(activity, acts, Goal.parse(header["goal"]), int(header["camera"]))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad program header ({exc})") from None


# ---------------------------------------------------------------------------
# scenes: what object sits under each pixel for a given camera and state
# ---------------------------------------------------------------------------

def _stable_seed(*parts) -> int:
    h = hashlib.sha256("/".join(map(str, parts)).encode()).digest()
    return int.from_bytes(h[:8], "little")


@dataclass(frozen=True)
class RoomLayout:
    room: str
    camera: int
    furniture: dict  # name -> (x0, y0, x1, y1)
    width: int = 1920
    height: int = 1080

    def slot(self, item: str, anchor: str) -> tuple:
        """Box of ``item`` resting at ``anchor`` in this view."""
        x0, y0, x1, y1 = self.furniture[anchor]
        r = np.random.default_rng(_stable_seed("slot", self.room, self.camera, item, anchor))
        w = h = 70.0
        cx = x0 + w / 2 + r.uniform(0, max(x1 - x0 - w, 1.0))
        cy = y0 + h / 2 + r.uniform(0, max((y1 - y0) * 0.5 - h, 1.0))
        return (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


def make_layout(room: str, camera: int, seed: int = 0, width: int = 1920, height: int = 1080) -> RoomLayout:
    rng = np.random.default_rng(_stable_seed("layout", seed, room, camera))
    names = sorted(f for f, (r, _) in FURNITURE.items() if r == room)
    # one furniture piece per cell of a shuffled 4x2 grid keeps boxes apart
    cells = rng.permutation(8)[: len(names)]
    boxes = {}
    for name, cell in zip(names, cells):
        gx, gy = cell % 4, cell // 4
        cw, ch = width / 4, height / 2
        w = rng.uniform(0.45, 0.75) * cw
        h = rng.uniform(0.45, 0.75) * ch
        x0 = gx * cw + rng.uniform(0.05 * cw, cw - w - 0.05 * cw)
        y0 = gy * ch + rng.uniform(0.05 * ch, ch - h - 0.05 * ch)
        boxes[name] = (x0, y0, x0 + w, y0 + h)
    return RoomLayout(room, camera, boxes, width, height)


@dataclass(frozen=True)
class Scene:
    """Static snapshot of one camera view; ``boxes`` is in drawing priority order."""

    room: str
    camera: int
    boxes: tuple  # ((label, (x0, y0, x1, y1)), ...) highest priority first
    width: int = 1920
    height: int = 1080
    horizon: float = 0.55

    def object_at(self, x: float, y: float) -> str:
        for label, (x0, y0, x1, y1) in self.boxes:
            if x0 <= x < x1 and y0 <= y < y1:
                return label
        return "floor" if y >= self.horizon * self.height else "wall"

    def box_of(self, label: str):
        for lab, box in self.boxes:
            if lab == label:
                return box
        return None

    def visible_objects(self) -> list[str]:
        return [lab for lab, _ in self.boxes]

    def coverage(self, x0: float, y0: float, x1: float, y1: float) -> dict:
        """Area of each label inside a window, resolving overlaps by priority.

        Computed on a coarse 16 px raster, which is plenty for weighting.
        """
        x0, y0 = max(x0, 0.0), max(y0, 0.0)
        x1, y1 = min(x1, float(self.width)), min(y1, float(self.height))
        if x1 <= x0 or y1 <= y0:
            return {}
        step = 16.0
        xs = np.arange(x0 + step / 2, x1, step)
        ys = np.arange(y0 + step / 2, y1, step)
        if len(xs) == 0:
            xs = np.array([(x0 + x1) / 2])
        if len(ys) == 0:
            ys = np.array([(y0 + y1) / 2])
        gx, gy = xs[None, None, :], ys[None, :, None]
        if self.boxes:
            b = np.array([box for _, box in self.boxes], dtype=np.float64)[:, :, None, None]
            inside = (gx >= b[:, 0]) & (gx < b[:, 2]) & (gy >= b[:, 1]) & (gy < b[:, 3])
            # first box in priority order wins each raster cell
            owner = np.where(inside.any(axis=0), inside.argmax(axis=0), -1)
        else:
            owner = np.full((len(ys), len(xs)), -1, dtype=np.int64)
        cell = (x1 - x0) * (y1 - y0) / owner.size
        counts = np.bincount(owner[owner >= 0], minlength=len(self.boxes))
        out: dict = {}
        for k, (label, _) in enumerate(self.boxes):
            if counts[k]:
                out[label] = out.get(label, 0.0) + int(counts[k]) * cell
        gy = gy[0]
        floor = (owner < 0) & (gy >= self.horizon * self.height)
        wall = (owner < 0) & ~floor
        if floor.any():
            out["floor"] = float(floor.sum()) * cell
        if wall.any():
            out["wall"] = float(wall.sum()) * cell
        return out


def render_scene(layout: RoomLayout, state: WorldState) -> Scene:
    char_anchor = state.anchor if room_of_anchor(state.anchor) == layout.room else None
    boxes = []
    if char_anchor is not None:
        ax0, ay0, ax1, ay1 = layout.furniture[char_anchor]
        cw, ch = 110.0, 280.0
        cx = ax1 + cw / 2 + 10 if ax1 + cw + 10 < layout.width else ax0 - cw / 2 - 10
        cy = min(max((ay0 + ay1) / 2, ch / 2), layout.height - ch / 2)
        char_box = (cx - cw / 2, cy - ch / 2, cx + cw / 2, cy + ch / 2)
        if state.holding is not None:
            boxes.append((state.holding, (cx - 35, cy - 35, cx + 35, cy + 35)))
        boxes.append(("character", char_box))
    items = []
    for item, loc in sorted(state.location.items()):
        if loc == HELD or loc not in layout.furniture:
            continue
        items.append((item, layout.slot(item, loc)))
    boxes += items
    boxes += sorted(layout.furniture.items())
    return Scene(layout.room, layout.camera, tuple(boxes), layout.width, layout.height)


# ---------------------------------------------------------------------------
# synthetic videos and datasets
# ---------------------------------------------------------------------------

DURATION_SECONDS = {"walk": (2.0, 3.5)}
DEFAULT_DURATION = (1.0, 2.0)


@dataclass
class SyntheticVideo:
    video_id: str
    program: ActivityProgram
    frame_count: int
    action_bounds: list  # [(start, end)) frame interval per action
    scenes: list  # one Scene per action
    track: np.ndarray  # (T, 2) ground-truth scanpath
    frame_times: np.ndarray  # ms
    camera: int

    @property
    def activity(self) -> int:
        return self.program.activity

    def action_at(self, frame: int) -> int:
        for i, (s, e) in enumerate(self.action_bounds):
            if s <= frame < e:
                return i
        raise ContractError(f"frame {frame} outside video {self.video_id}")

    def scene(self, frame: int) -> Scene:
        return self.scenes[self.action_at(frame)]

    def frame_action_index(self) -> np.ndarray:
        out = np.empty(self.frame_count, dtype=np.int64)
        for i, (s, e) in enumerate(self.action_bounds):
            out[s:e] = i
        return out


def cutoff(video: SyntheticVideo, fraction: float) -> tuple[int, int]:
    """(K, number of viewed actions) for an input fraction.

    K = floor(fraction * T) frames are visible; an action counts as viewed
    when its interval ends at or before K.
    """
    k = max(1, int(np.floor(fraction * video.frame_count)))
    n_viewed = sum(1 for _, e in video.action_bounds if e <= k)
    return k, n_viewed


def _action_target(act: AtomicAction) -> str:
    if act.verb == "standup":
        return "character"
    if act.verb == "put":
        return act.obj2
    return act.obj


def _scanpath(rng, scenes, bounds, program, frame_count, jitter_px, lookahead, distractor_p, width, height):
    track = np.empty((frame_count, 2))
    current = None
    point = None
    for i, (s, e) in enumerate(bounds):
        scene = scenes[i]
        target = _action_target(program.actions[i])
        nxt = _action_target(program.actions[i + 1]) if i + 1 < len(program.actions) else None
        look_from = e - int(np.ceil(lookahead * (e - s))) if nxt is not None else e
        for t in range(s, e):
            want = nxt if t >= look_from and scene.box_of(nxt) is not None else target
            if rng.random() < distractor_p:
                vis = scene.visible_objects()
                want = vis[int(rng.integers(len(vis)))]
            box = scene.box_of(want)
            if box is None:
                want = "character" if scene.box_of("character") is not None else want
                box = scene.box_of(want)
            stale = point is None or box is None or not (box[0] <= point[0] < box[2] and box[1] <= point[1] < box[3])
            if want != current or stale:
                if box is None:
                    point = np.array([width / 2, height / 2]) + rng.normal(0, jitter_px, 2)
                else:
                    cx, cy = (box[0] + box[2]) / 2, (box[1] + box[3]) / 2
                    # keep the jittered point on the object so the pixel lookup sees it
                    hx, hy = (box[2] - box[0]) / 2 - 1, (box[3] - box[1]) / 2 - 1
                    point = np.array([cx + np.clip(rng.normal(0, jitter_px), -hx, hx),
                                      cy + np.clip(rng.normal(0, jitter_px), -hy, hy)])
                current = want
            track[t] = np.clip(point, [0, 0], [width - 1e-6, height - 1e-6])
    return track


@dataclass
class DatasetConfig:
    activities: int = 18
    cameras: int = 4
    test_cameras_per_activity: int = 1
    videos_per_pair: int = 3
    frame_rate: float = 4.0
    max_seconds: float = 32.0
    filler_max: int = 3
    jitter_px: float = 20.0
    lookahead: float = 0.2
    distractor_p: float = 0.1
    min_actions: int = 6
    max_actions: int = 26
    width: int = 1920
    height: int = 1080


@dataclass
class Dataset:
    train: list
    test: list
    config: DatasetConfig
    seed: int

    @property
    def videos(self) -> list:
        return self.train + self.test

    def pairs(self, split: str) -> set:
        return {(v.activity, v.camera) for v in getattr(self, split)}


def make_video(video_id: str, program: ActivityProgram, cfg: DatasetConfig, rng, layout_seed: int) -> SyntheticVideo:
    dur = []
    for act in program.actions:
        lo, hi = DURATION_SECONDS.get(act.verb, DEFAULT_DURATION)
        dur.append(rng.uniform(lo, hi))
    dur = np.array(dur)
    if dur.sum() > cfg.max_seconds:
        dur *= cfg.max_seconds / dur.sum()
    frames = np.maximum(1, np.round(dur * cfg.frame_rate)).astype(int)
    cap = max(int(np.floor(cfg.max_seconds * cfg.frame_rate)), len(frames))
    while frames.sum() > cap:
        # rounding up can overshoot the length cap; shave the longest action
        frames[int(np.argmax(frames))] -= 1
    ends = np.cumsum(frames)
    starts = ends - frames
    bounds = [(int(s), int(e)) for s, e in zip(starts, ends)]
    state = initial_state()
    scenes = []
    for act in program.actions:
        _apply(state, act)
        layout = make_layout(state.room, program.camera, layout_seed, cfg.width, cfg.height)
        scenes.append(render_scene(layout, state))
    t_total = int(ends[-1])
    track = _scanpath(rng, scenes, bounds, program, t_total, cfg.jitter_px, cfg.lookahead,
                      cfg.distractor_p, cfg.width, cfg.height)
    times = np.arange(t_total) * (1000.0 / cfg.frame_rate)
    return SyntheticVideo(video_id, program, t_total, bounds, scenes, track, times, program.camera)


def generate_dataset(cfg: DatasetConfig | None = None, seed: int = 0) -> Dataset:
    """Train/test videos whose (activity, camera) pairs never overlap."""
    cfg = cfg or DatasetConfig()
    if not 1 <= cfg.activities <= len(ACTIVITY_TEMPLATES):
        raise ConfigError(f"activities must be in [1, {len(ACTIVITY_TEMPLATES)}], got {cfg.activities}")
    if not 1 <= cfg.test_cameras_per_activity < cfg.cameras:
        raise ConfigError(
            f"need 1 <= test_cameras_per_activity < cameras to keep both splits nonempty "
            f"(got {cfg.test_cameras_per_activity} of {cfg.cameras})")
    if cfg.videos_per_pair < 1:
        raise ConfigError("videos_per_pair must be >= 1")
    rng = np.random.default_rng(_stable_seed("dataset", seed))
    train, test = [], []
    for act in range(cfg.activities):
        test_cams = set(rng.choice(cfg.cameras, cfg.test_cameras_per_activity, replace=False).tolist())
        for cam in range(cfg.cameras):
            for k in range(cfg.videos_per_pair):
                for _ in range(1000):
                    prog = make_program(act, rng, cfg.filler_max, cam)
                    if cfg.min_actions <= len(prog.actions) <= cfg.max_actions:
                        break
                else:
                    raise ConfigError(f"cannot meet length bounds for {ACTIVITY_NAMES[act]}")
                vid = make_video(f"{ACTIVITY_NAMES[act]}-c{cam}-{k}", prog, cfg, rng, seed)
                (test if cam in test_cams else train).append(vid)
    return Dataset(train, test, cfg, seed)
