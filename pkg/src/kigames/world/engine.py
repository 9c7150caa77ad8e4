"""Deterministic text-world engine.

The engine is a set of pure functions over :class:`EpisodeState`;
:class:`TextWorldEnv` wraps them in the reset/step interface agents use.
All text is generated from the state by the phrase functions below, which
the knowledge extractor inverts.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from .worldfile import BOOL_KEYS, MAX_STEPS, NUMBER_KEYS, WorldSpec, _bool

INVENTORY = "inventory"
REFUSAL = "You can't do that."

# Templates are matched to rules by name; these spellings share a rule.
RULE_ALIASES = {"put": "move", "take": "pick_up", "examine": "look_at", "go": "go_to", "focus": "focus_on"}


@dataclass
class StepResult:
    obv: str
    inv: str
    desc: str
    reward: float
    score: float
    done: bool
    valid_actions: list
    golden_next: str | None = None
    look: str = ""
    step: int = 0
    failed: bool = False

    @property
    def won(self):
        return self.score >= 100.0


@dataclass
class EpisodeState:
    task_id: str
    variation: int
    seed: int
    location: str
    parent: dict
    states: dict
    props: dict
    connections: frozenset = frozenset()
    focused: tuple = ()
    bindings: dict = field(default_factory=dict)
    step: int = 0
    progress: Fraction = Fraction(0)
    subgoal_index: int = 0
    golden_ptr: int = 0
    done: bool = False
    failed: bool = False

    def clone(self):
        return EpisodeState(
            self.task_id, self.variation, self.seed, self.location, dict(self.parent), dict(self.states),
            self.props, self.connections, self.focused, dict(self.bindings), self.step, self.progress,
            self.subgoal_index, self.golden_ptr, self.done, self.failed,
        )

    def key(self):
        """Hashable identity of the world configuration (ignores the step counter)."""
        return (
            self.location, tuple(sorted(self.parent.items())), tuple(sorted(self.states.items())),
            self.connections, self.focused, self.subgoal_index, self.done,
        )

    @property
    def score_cents(self):
        return math.floor(self.progress * 10000)

    @property
    def score(self):
        return self.score_cents / 100


def format_score(score):
    return f"{score:.2f}"


def _substitute(text, variables):
    for k, v in variables.items():
        text = text.replace("{" + k + "}", v)
    return text


class Engine:
    """Stateless rules for one :class:`WorldSpec`."""

    def __init__(self, spec: WorldSpec):
        self.spec = spec
        self.order = {name: i for i, name in enumerate(spec.objects)}
        self.entity_names = set(spec.objects) | set(spec.locations)
        self._golden_locs = {}

    # -- episode setup --------------------------------------------------------

    def initial_state(self, task_id, variation, seed=0):
        task = self.spec.task(task_id)
        var = task.variation(variation)
        parent = {name: o.at for name, o in self.spec.objects.items()}
        props = {name: dict(o.props) for name, o in self.spec.objects.items()}
        for obj, par, _ in var.places:
            parent[obj] = par
        for obj, key, value, _ in var.sets:
            props[obj][key] = _coerce(key, value)
        states = {name: p["state"] for name, p in props.items() if "state" in p}
        return EpisodeState(task_id, var.index, int(seed), var.start, parent, states, props)

    def variables(self, state):
        return self.spec.task(state.task_id).variation(state.variation).vars

    def description(self, state):
        return _substitute(self.spec.task(state.task_id).description, self.variables(state))

    def golden(self, task_id, variation):
        return list(self.spec.task(task_id).variation(variation).golden)

    # -- scope ----------------------------------------------------------------

    def room_of(self, state, obj):
        cur = state.parent[obj]
        while cur in state.parent:
            cur = state.parent[cur]
        return cur

    def children(self, state, parent):
        kids = [o for o, p in state.parent.items() if p == parent]
        kids.sort(key=self.order.__getitem__)
        return kids

    def is_open(self, state, obj):
        return state.states.get(obj) != "closed"

    def visible(self, state):
        """Objects the agent can refer to, in deterministic order."""
        out = []
        for o in self.children(state, state.location):
            out.append(o)
            p = state.props[o]
            if p.get("surface") or (p.get("container") and self.is_open(state, o)):
                out.extend(self.children(state, o))
        out.extend(self.children(state, INVENTORY))
        return out

    def held(self, state):
        return self.children(state, INVENTORY)

    def _slot_candidates(self, state, filt, visible):
        props = state.props
        if filt == "location":
            return list(self.spec.locations[state.location])
        if filt == "held":
            return self.held(state)
        if filt == "any":
            return list(visible)
        if filt == "portable":
            return [o for o in visible if props[o].get("portable")]
        if filt == "receptacle":
            return [o for o in visible if props[o].get("container") or props[o].get("surface")]
        if filt == "measurable":
            return [o for o in visible if "temperature" in props[o]]
        if filt == "loose":
            return [o for o in visible if props[o].get("portable") and state.parent[o] != INVENTORY]
        return [o for o in visible if props[o].get(filt)]

    def valid_action_structs(self, state):
        """``(action, template_index, objects)`` triples, sorted by action string."""
        visible = self.visible(state)
        out = {}
        for ti, tmpl in enumerate(self.spec.templates):
            pools = [self._slot_candidates(state, f, visible) for f in tmpl.slots]
            for combo in _product(pools):
                if len(set(combo)) != len(combo):
                    continue
                action = tmpl.fill(combo)
                out.setdefault(action, (action, ti, tuple(combo)))
        if "look around" not in out:
            out["look around"] = ("look around", None, ())
        return [out[k] for k in sorted(out)]

    def valid_actions(self, state):
        return [a for a, _, _ in self.valid_action_structs(state)]

    # -- parsing ----------------------------------------------------------------

    def parse(self, action):
        """All ``(template_index, objects)`` readings of ``action`` with known entity names."""
        action = " ".join(action.strip().lower().split())
        readings = []
        for ti, tmpl in enumerate(self.spec.templates):
            for objs in _match_pattern(tmpl.pattern, action):
                if all(o in self.entity_names for o in objs):
                    readings.append((ti, objs))
        return readings

    # -- text -------------------------------------------------------------------

    def _item_phrase(self, state, obj):
        s = state.states.get(obj)
        if s in ("on", "off"):
            return f"a {obj}, which is {'on' if self.powered(state, obj) else 'off'}"
        return f"a {obj}"

    def _list_phrase(self, state, objs):
        return ", ".join(self._item_phrase(state, o) for o in objs) if objs else "nothing"

    def _entry_phrase(self, state, obj):
        p = state.props[obj]
        if p.get("surface"):
            return f"a {obj}. On the {obj} is: {self._list_phrase(state, self.children(state, obj))}."
        if p.get("container"):
            if not self.is_open(state, obj):
                return f"a {obj}. The {obj} is closed."
            return f"a {obj} (containing {self._list_phrase(state, self.children(state, obj))})"
        return self._item_phrase(state, obj)

    def look(self, state):
        parts = [f"This room is called the {state.location}. In it, you see:", "- the agent"]
        for o in self.children(state, state.location):
            parts.append("- " + self._entry_phrase(state, o))
        parts.append("You also see:")
        for other in self.spec.locations[state.location]:
            parts.append(f"- A door to the {other} (that is open)")
        return " ".join(parts)

    def inventory(self, state):
        return f"In your inventory, you see: {self._list_phrase(state, self.held(state))}."

    def _look_at(self, state, obj):
        if obj in self.spec.locations:
            return self.look(state) if obj == state.location else None
        p = state.props[obj]
        text = self._entry_phrase(state, obj)
        text = text if text.endswith(".") or text.endswith(")") else text + "."
        if "description" in p:
            text += " " + p["description"]
        if "lifespan" in p:
            text += f" It typically lives about {int(p['lifespan'])} years."
        if p.get("electrical"):
            linked = sorted(b if a == obj else a for a, b in state.connections if obj in (a, b))
            text += f" It is connected to: {', '.join(linked) if linked else 'nothing'}."
        return text

    def ground_truth_relations(self, state):
        """Relations a perfect reader of ``look`` + ``inventory`` would extract."""
        room = state.location
        rel = set()
        for o in self.children(state, room):
            rel.add((room, "hasA", o))
            p = state.props[o]
            if p.get("surface"):
                rel.update((o, "hasA", c) for c in self.children(state, o))
            elif p.get("container") and self.is_open(state, o):
                rel.update((c, "in", o) for c in self.children(state, o))
        rel.update((c, "in", INVENTORY) for c in self.held(state))
        rel.update((room, "connectedTo", other) for other in self.spec.locations[room])
        return rel

    # -- electricity ------------------------------------------------------------

    def _component(self, state, obj):
        adj = {}
        for a, b in state.connections:
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        seen, todo = {obj}, [obj]
        while todo:
            cur = todo.pop()
            for nxt in adj.get(cur, ()):
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
        return seen

    def powered(self, state, obj, renewable_only=False):
        for o in self._component(state, obj):
            if o != obj and state.props[o].get("power"):
                if not renewable_only or state.props[o].get("renewable"):
                    return True
        return False

    # -- dynamics ---------------------------------------------------------------

    def _apply(self, state, tmpl_name, objs):
        """Mutate ``state`` for a parsed action; return feedback or None if inapplicable."""
        visible = set(self.visible(state))
        props = state.props
        verb = RULE_ALIASES.get(tmpl_name, tmpl_name)
        if verb == "look_around":
            return self.look(state)
        if verb == "look_at":
            (o,) = objs
            if o in visible or o == state.location:
                return self._look_at(state, o)
            return None
        if verb == "go_to":
            (loc,) = objs
            if loc in self.spec.locations.get(state.location, ()):
                state.location = loc
                return f"You move to the {loc}."
            return None
        if verb == "pick_up":
            (o,) = objs
            if o in visible and props[o].get("portable") and state.parent[o] != INVENTORY:
                state.parent[o] = INVENTORY
                return f"You move the {o} to the inventory."
            return None
        if verb == "drop":
            (o,) = objs
            if state.parent.get(o) == INVENTORY:
                state.parent[o] = state.location
                return f"You drop the {o}."
            return None
        if verb == "focus_on":
            (o,) = objs
            if o not in visible:
                return None
            if o in state.focused:
                return f"You are already focusing on the {o}."
            return self._focus(state, o)
        if verb == "move":
            o, dst = objs
            if (o in visible and dst in visible and props[o].get("portable")
                    and (props[dst].get("container") or props[dst].get("surface"))
                    and self.is_open(state, dst) and state.parent[o] != dst):
                state.parent[o] = dst
                return f"You move the {o} to the {dst}."
            return None
        if verb in ("open", "close"):
            (o,) = objs
            want, have = ("open", "closed") if verb == "open" else ("closed", "open")
            if o in visible and props[o].get("openable") and state.states.get(o) == have:
                state.states[o] = want
                return f"The {o} is now {want}."
            return None
        if verb == "connect":
            a, b = objs
            pair = tuple(sorted((a, b)))
            if (a in visible and b in visible and props[a].get("electrical") and props[b].get("electrical")
                    and pair not in state.connections):
                state.connections = state.connections | {pair}
                return f"The {a} is now connected to the {b}."
            return None
        if verb == "disconnect":
            (o,) = objs
            linked = {p for p in state.connections if o in p}
            if o in visible and linked:
                state.connections = state.connections - linked
                return f"The {o} is now disconnected."
            return None
        if verb == "use":
            tool, target = objs
            if (state.parent.get(tool) == INVENTORY and props[tool].get("tool") and target in visible
                    and "temperature" in props[target]):
                return f"The {tool} measures a temperature of {_num(props[target]['temperature'])} degrees."
            return None
        return None

    def _focus(self, state, obj):
        task = self.spec.task(state.task_id)
        variables = self.variables(state)
        ok = False
        for sg in task.subgoals[state.subgoal_index:]:
            if sg.kind == "focus" and _substitute(sg.args[0], variables) == obj:
                ok = True
            elif sg.kind == "focus_kind" and _kind_match(state.props[obj], sg.args[0]):
                ok = True
                state.bindings.setdefault("focused", obj)
        state.focused = state.focused + (obj,)
        if not ok:
            state.failed = True
            state.done = True
            return f"You focus on the {obj}. That is not what the task asks for; the task has ended."
        return f"You focus on the {obj}."

    def _satisfied(self, state, sg, action):
        variables = self.variables(state)
        focused = state.bindings.get("focused", "$focused")
        args = [_substitute(a, variables).replace("$focused", focused) for a in sg.args]
        if sg.kind == "action":
            return action is not None and action == args[0]
        if sg.kind == "location":
            return state.location == args[0]
        if sg.kind == "focus":
            return args[0] in state.focused
        if sg.kind == "focus_kind":
            return any(_kind_match(state.props[o], args[0]) for o in state.focused)
        if sg.kind == "inside":
            return state.parent.get(args[0]) == args[1]
        if sg.kind == "connected":
            return any(args[0] in p for p in state.connections)
        if sg.kind == "powered":
            return self.powered(state, args[0], renewable_only=True)
        raise ValueError(sg.kind)

    def transition(self, state, action):
        """Return ``(new_state, feedback, reward)``; ``state`` is not modified."""
        if state.done:
            raise RuntimeError("episode is finished; call reset")
        new = state.clone()
        norm = " ".join(action.strip().lower().split())
        feedback = None
        readings = self.parse(norm)
        if len(readings) == 1:
            ti, objs = readings[0]
            feedback = self._apply(new, self.spec.templates[ti].name, objs)
        if feedback is None:
            new = state.clone()
            feedback = REFUSAL
            done_action = None
        else:
            done_action = norm
        new.step += 1
        old_cents = new.score_cents
        if not new.failed:
            task = self.spec.task(new.task_id)
            while new.subgoal_index < len(task.subgoals):
                sg = task.subgoals[new.subgoal_index]
                if not self._satisfied(new, sg, done_action):
                    break
                new.progress += sg.fraction
                new.subgoal_index += 1
            if new.subgoal_index == len(task.subgoals):
                new.done = True
        golden = self.spec.task(new.task_id).variation(new.variation).golden
        if done_action is not None and new.golden_ptr < len(golden) and done_action == golden[new.golden_ptr]:
            new.golden_ptr += 1
        if new.step >= MAX_STEPS:
            new.done = True
        reward = (new.score_cents - old_cents) / 100
        return new, feedback, reward

    # -- golden guidance --------------------------------------------------------

    def _golden_locations(self, task_id, variation):
        key = (task_id, variation)
        if key not in self._golden_locs:
            state = self.initial_state(task_id, variation)
            locs = []
            for a in self.golden(task_id, variation):
                locs.append(state.location)
                if state.done:
                    break
                state, _, _ = self.transition(state, a)
            self._golden_locs[key] = locs
        return self._golden_locs[key]

    def golden_next(self, state, valid=None):
        """Next action of the stored golden sequence, when it is currently valid.

        If the agent has wandered off, returns the first ``go to`` hop back toward
        the room the golden sequence expects; otherwise None.
        """
        if state.done:
            return None
        golden = self.golden(state.task_id, state.variation)
        ptr = state.golden_ptr
        while ptr < len(golden) and golden[ptr].startswith("focus on ") and golden[ptr][9:] in state.focused:
            ptr += 1
        if ptr >= len(golden):
            return None
        valid = self.valid_actions(state) if valid is None else valid
        target = golden[ptr]
        if target in valid:
            return target
        locs = self._golden_locations(state.task_id, state.variation)
        want = locs[ptr] if ptr < len(locs) else state.location
        if want != state.location:
            hop = self._next_hop(state.location, want)
            if hop and f"go to {hop}" in valid:
                return f"go to {hop}"
        return None

    def _next_hop(self, src, dst):
        prev = {src: None}
        todo = deque([src])
        while todo:
            cur = todo.popleft()
            if cur == dst:
                break
            for nxt in self.spec.locations[cur]:
                if nxt not in prev:
                    prev[nxt] = cur
                    todo.append(nxt)
        if dst not in prev:
            return None
        cur = dst
        while prev[cur] != src:
            cur = prev[cur]
        return cur

    # -- observation ------------------------------------------------------------

    def observe(self, state, feedback, reward=0.0, with_golden=True):
        valid = [] if state.done else self.valid_actions(state)
        return StepResult(
            obv=feedback,
            inv=self.inventory(state),
            desc=self.description(state),
            reward=reward,
            score=state.score,
            done=state.done,
            valid_actions=valid,
            golden_next=self.golden_next(state, valid) if with_golden else None,
            look=self.look(state),
            step=state.step,
            failed=state.failed,
        )


def _coerce(key, value):
    if key in BOOL_KEYS:
        return _bool(value)
    if key in NUMBER_KEYS:
        return float(value)
    return value


def _num(x):
    return str(int(x)) if float(x).is_integer() else f"{x:.1f}"


def _kind_match(props, spec):
    key, _, want = spec.partition("=")
    have = props.get(key.strip())
    want = want.strip()
    if isinstance(have, bool):
        return have == (want.lower() == "true")
    if have is None:
        return want.lower() == "false" and key.strip() in ("living",)
    return str(have) == want


def _product(pools):
    if not pools:
        yield ()
        return
    head, *rest = pools
    for x in head:
        for tail in _product(rest):
            yield (x,) + tail


def _match_pattern(pattern, action):
    """Every way ``action`` splits into the OBJ slots of ``pattern``."""
    pieces = pattern.split("OBJ")
    if len(pieces) == 1:
        return [()] if action == pattern else []
    head, tail = pieces[0], pieces[-1]
    if not action.startswith(head) or not action.endswith(tail) or len(action) < len(head) + len(tail):
        return []
    body = action[len(head): len(action) - len(tail)] if tail else action[len(head):]
    seps = pieces[1:-1]
    return [tuple(parts) for parts in _splits(body, seps) if all(parts)]


def _splits(body, seps):
    if not seps:
        return [[body]]
    sep, rest = seps[0], seps[1:]
    out = []
    start = 0
    while True:
        i = body.find(sep, start)
        if i < 0:
            break
        for tail in _splits(body[i + len(sep):], rest):
            out.append([body[:i]] + tail)
        start = i + 1
    return out


class TextWorldEnv:
    """Stateful reset/step wrapper around :class:`Engine`."""

    def __init__(self, spec, trace_path=None):
        self.spec = spec
        self.engine = Engine(spec)
        self.state = None
        self.trace_path = trace_path
        self._trace = []

    def reset(self, task_id, variation, seed=0):
        self.state = self.engine.initial_state(task_id, variation, seed)
        self._trace = []
        return self.engine.observe(self.state, self.engine.look(self.state))

    def step(self, action):
        if self.state is None:
            raise RuntimeError("call reset before step")
        self.state, feedback, reward = self.engine.transition(self.state, action)
        result = self.engine.observe(self.state, feedback, reward)
        self._trace.append((self.state.step, action, reward, result.score, result.done))
        if result.done and self.trace_path:
            self.write_trace(self.trace_path)
        return result

    def valid_actions(self):
        return self.engine.valid_actions(self.state)

    def write_trace(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "action", "reward", "score", "done"])
            for row in self._trace:
                w.writerow([row[0], row[1], f"{row[2]:.2f}", f"{row[3]:.2f}", int(row[4])])


def reset(spec, task_id, variation, seed=0):
    env = TextWorldEnv(spec)
    return env, env.reset(task_id, variation, seed)


def step(env, action):
    return env.step(action)


def valid_actions(env):
    return env.valid_actions()


def golden_sequence(spec, task_id, variation):
    return list(spec.task(task_id).variation(variation).golden)
