"""World-file parser and validator.

A world file is line-oriented text::

    worldfile_version = 1

    [location kitchen]
    connects = hallway

    [object thermometer]
    at = counter
    portable = true

    [template move]
    pattern = move OBJ to OBJ
    slots = portable, receptacle

    [task classification]
    description = Your task is to find a(n) non-living thing. ...
    subgoal = 1/6 action look around
    subgoal = 1/2 focus_kind living=false

    [variation classification 0]
    start = kitchen
    var = box=red box
    golden = look around | focus on thermometer | move thermometer to red box

``#`` starts a comment.  Keys marked repeatable below may appear more than
once; everything else at most once.  Every problem is reported with the
line it came from.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

SECTION_KINDS = ("location", "object", "template", "task", "variation")

OBJECT_KEYS = {
    "at", "portable", "container", "surface", "openable", "state", "living", "material",
    "temperature", "electrical", "power", "renewable", "tool", "lifespan", "description",
}
BOOL_KEYS = {"portable", "container", "surface", "openable", "living", "electrical", "power", "renewable", "tool"}
NUMBER_KEYS = {"temperature", "lifespan"}
STATES = {"open", "closed", "on", "off"}

SLOT_FILTERS = {
    "any", "location", "held", "portable", "loose", "receptacle", "openable", "electrical", "tool",
    "measurable",
}

SUBGOAL_KINDS = {
    "action": 1,        # action <exact action text>
    "location": 1,      # location <room>
    "focus": 1,         # focus <object>
    "focus_kind": 1,    # focus_kind <prop>=<value>; binds $focused
    "inside": 2,        # inside <object> <container>  (names separated by ' @ ')
    "connected": 1,     # connected <object>
    "powered": 1,       # powered <object>  (by a renewable source)
}

MAX_STEPS = 100


class WorldFileError(ValueError):
    """Raised with every schema violation found, one per line of the message."""

    def __init__(self, problems, path=None):
        self.problems = list(problems)
        where = f"{path}: " if path else ""
        super().__init__(where + "; ".join(self.problems))


@dataclass(frozen=True)
class Template:
    name: str
    pattern: str
    slots: tuple

    @property
    def arity(self):
        return len(self.slots)

    def fill(self, objs):
        out = self.pattern
        for o in objs:
            out = out.replace("OBJ", o, 1)
        return out

    @property
    def regex(self):
        parts = [re.escape(p) for p in self.pattern.split("OBJ")]
        return re.compile("^" + "(.+?)".join(parts) + "$")


@dataclass(frozen=True)
class Subgoal:
    fraction: Fraction
    kind: str
    args: tuple
    line: int = 0


@dataclass(frozen=True)
class Variation:
    index: int
    start: str
    vars: dict
    places: tuple       # (object, parent)
    sets: tuple         # (object, key, value)
    golden: tuple
    line: int = 0


@dataclass
class TaskDef:
    task_id: str
    description: str
    subgoals: list
    variations: dict = field(default_factory=dict)
    line: int = 0

    def variation(self, index):
        try:
            return self.variations[int(index)]
        except (KeyError, ValueError):
            raise KeyError(f"task {self.task_id!r} has no variation {index!r}") from None


@dataclass
class ObjectDef:
    name: str
    at: str
    props: dict
    line: int = 0


@dataclass
class WorldSpec:
    version: int
    locations: dict          # name -> tuple of connected names
    objects: dict            # name -> ObjectDef
    templates: list
    tasks: dict
    path: str = None

    def task(self, task_id):
        try:
            return self.tasks[task_id]
        except KeyError:
            raise KeyError(f"unknown task {task_id!r}; known: {sorted(self.tasks)}") from None


# -- parsing ------------------------------------------------------------------

_SECTION = re.compile(r"^\[(\w+)(?:\s+(.+?))?\]$")


def _split_lines(text):
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line


def _bool(value):
    v = value.strip().lower()
    if v in ("true", "yes", "1"):
        return True
    if v in ("false", "no", "0"):
        return False
    raise ValueError(f"expected true/false, got {value!r}")


def parse_world(text, path=None):
    problems = []
    version = None
    sections = []  # (kind, name, line, [(key, value, line)])
    current = None
    for no, line in _split_lines(text):
        m = _SECTION.match(line)
        if m:
            kind, name = m.group(1), (m.group(2) or "").strip()
            if kind not in SECTION_KINDS:
                problems.append(f"line {no}: unknown section kind [{kind}]")
                current = None
                continue
            if not name:
                problems.append(f"line {no}: section [{kind}] needs a name")
            current = (kind, name, no, [])
            sections.append(current)
            continue
        if "=" not in line:
            problems.append(f"line {no}: expected 'key = value', got {line!r}")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if current is None:
            if key == "worldfile_version":
                try:
                    version = int(value)
                except ValueError:
                    problems.append(f"line {no}: worldfile_version must be an integer")
            else:
                problems.append(f"line {no}: unknown key {key!r} outside any section")
            continue
        current[3].append((key, value, no))
    if version is None:
        problems.append("line 1: missing header 'worldfile_version = 1'")
    elif version != 1:
        problems.append(f"line 1: unsupported worldfile_version {version}")

    locations, loc_lines, objects, templates, tasks = {}, {}, {}, [], {}
    raw_variations = []
    for kind, name, no, entries in sections:
        handler = {
            "location": _parse_location, "object": _parse_object, "template": _parse_template,
            "task": _parse_task, "variation": _parse_variation,
        }[kind]
        try:
            item = handler(name, no, entries, problems)
        except ValueError as exc:  # pragma: no cover - handlers report into problems
            problems.append(f"line {no}: {exc}")
            continue
        if item is None:
            continue
        if kind == "location":
            if name in locations:
                problems.append(f"line {no}: duplicate location {name!r}")
            locations[name] = item
            loc_lines[name] = no
        elif kind == "object":
            if name in objects or name in locations:
                problems.append(f"line {no}: duplicate entity name {name!r}")
            objects[name] = item
        elif kind == "template":
            templates.append(item)
        elif kind == "task":
            if name in tasks:
                problems.append(f"line {no}: duplicate task {name!r}")
            tasks[name] = item
        else:
            raw_variations.append(item)

    spec = WorldSpec(version or 0, locations, objects, templates, tasks, str(path) if path else None)
    for task_id, var in raw_variations:
        task = tasks.get(task_id)
        if task is None:
            problems.append(f"line {var.line}: variation refers to unknown task {task_id!r}")
            continue
        if var.index in task.variations:
            problems.append(f"line {var.line}: duplicate variation {var.index} of task {task_id!r}")
        task.variations[var.index] = var
    _validate(spec, loc_lines, problems)
    if problems:
        raise WorldFileError(problems, path)
    return spec


def _entries(entries, allowed, repeatable, problems, section):
    seen = {}
    out = {}
    for key, value, no in entries:
        if key not in allowed:
            problems.append(f"line {no}: unknown key {key!r} in {section}")
            continue
        if key in repeatable:
            out.setdefault(key, []).append((value, no))
        else:
            if key in seen:
                problems.append(f"line {no}: key {key!r} repeated in {section} (first on line {seen[key]})")
            seen[key] = no
            out[key] = (value, no)
    return out


def _csv(value):
    return tuple(v.strip() for v in value.split(",") if v.strip())


def _parse_location(name, no, entries, problems):
    e = _entries(entries, {"connects"}, set(), problems, f"[location {name}]")
    return _csv(e["connects"][0]) if "connects" in e else ()


def _parse_object(name, no, entries, problems):
    section = f"[object {name}]"
    e = _entries(entries, OBJECT_KEYS, set(), problems, section)
    if "at" not in e:
        problems.append(f"line {no}: {section} is missing 'at'")
        return None
    props = {}
    for key, (value, line) in e.items():
        if key == "at":
            continue
        try:
            if key in BOOL_KEYS:
                props[key] = _bool(value)
            elif key in NUMBER_KEYS:
                props[key] = float(value)
            elif key == "state":
                if value not in STATES:
                    raise ValueError(f"state must be one of {sorted(STATES)}, got {value!r}")
                props[key] = value
            else:
                props[key] = value
        except ValueError as exc:
            problems.append(f"line {line}: {section} {key}: {exc}")
    if name != name.lower() or any(c in name for c in ",.()|@:=$"):
        problems.append(f"line {no}: object name {name!r} must be lowercase without punctuation")
    return ObjectDef(name, e["at"][0], props, no)


def _parse_template(name, no, entries, problems):
    section = f"[template {name}]"
    e = _entries(entries, {"pattern", "slots"}, set(), problems, section)
    if "pattern" not in e:
        problems.append(f"line {no}: {section} is missing 'pattern'")
        return None
    pattern = e["pattern"][0]
    slots = _csv(e["slots"][0]) if "slots" in e else ()
    arity = pattern.count("OBJ")
    if arity != len(slots):
        problems.append(f"line {no}: {section} pattern has {arity} OBJ slot(s) but {len(slots)} slot filter(s)")
    if arity > 2:
        problems.append(f"line {no}: {section} has more than 2 object slots")
    for s in slots:
        if s not in SLOT_FILTERS:
            problems.append(f"line {e['slots'][1]}: {section} unknown slot filter {s!r}")
    return Template(name, pattern, slots)


def _parse_task(name, no, entries, problems):
    section = f"[task {name}]"
    e = _entries(entries, {"description", "subgoal"}, {"subgoal"}, problems, section)
    if "description" not in e:
        problems.append(f"line {no}: {section} is missing 'description'")
    subgoals = []
    for value, line in e.get("subgoal", []):
        parts = value.split(None, 2)
        if len(parts) < 3:
            problems.append(f"line {line}: {section} subgoal needs '<fraction> <kind> <args>'")
            continue
        frac_s, kind, rest = parts
        try:
            frac = Fraction(frac_s)
        except ValueError:
            problems.append(f"line {line}: {section} bad reward fraction {frac_s!r}")
            continue
        if kind not in SUBGOAL_KINDS:
            problems.append(f"line {line}: {section} unknown subgoal kind {kind!r}")
            continue
        args = tuple(a.strip() for a in rest.split(" @ ")) if kind == "inside" else (rest.strip(),)
        if len(args) != SUBGOAL_KINDS[kind]:
            problems.append(f"line {line}: {section} subgoal {kind} takes {SUBGOAL_KINDS[kind]} argument(s)")
            continue
        subgoals.append(Subgoal(frac, kind, args, line))
    if not subgoals:
        problems.append(f"line {no}: {section} has no subgoals")
    total = sum((s.fraction for s in subgoals), Fraction(0))
    if subgoals and total != 1:
        problems.append(f"line {no}: task {name!r} subgoal reward fractions sum to {total}, not 1")
    return TaskDef(name, e.get("description", ("", no))[0], subgoals, {}, no)


def _parse_variation(name, no, entries, problems):
    section = f"[variation {name}]"
    parts = name.split()
    if len(parts) != 2 or not parts[1].isdigit():
        problems.append(f"line {no}: variation header must be '[variation <task> <index>]'")
        return None
    e = _entries(entries, {"start", "var", "place", "set", "golden"}, {"var", "place", "set"}, problems, section)
    if "start" not in e:
        problems.append(f"line {no}: {section} is missing 'start'")
    if "golden" not in e:
        problems.append(f"line {no}: {section} is missing 'golden'")
    vars_ = {}
    for value, line in e.get("var", []):
        if "=" not in value:
            problems.append(f"line {line}: {section} var must be 'name=value'")
            continue
        k, v = (s.strip() for s in value.split("=", 1))
        vars_[k] = v
    places = []
    for value, line in e.get("place", []):
        if " in " not in value:
            problems.append(f"line {line}: {section} place must be '<object> in <parent>'")
            continue
        obj, parent = (s.strip() for s in value.split(" in ", 1))
        places.append((obj, parent, line))
    sets = []
    for value, line in e.get("set", []):
        m = re.match(r"^(.+?)\.(\w+)\s*:\s*(.+)$", value)
        if not m:
            problems.append(f"line {line}: {section} set must be '<object>.<key>: <value>'")
            continue
        sets.append((m.group(1).strip(), m.group(2), m.group(3).strip(), line))
    golden = tuple(a.strip() for a in e.get("golden", ("", no))[0].split("|") if a.strip())
    return parts[0], Variation(int(parts[1]), e.get("start", ("", no))[0], vars_, tuple(places), tuple(sets), golden, no)


# -- validation ---------------------------------------------------------------

def _validate(spec, loc_lines, problems):
    locs, objs = spec.locations, spec.objects
    for loc, conns in locs.items():
        for other in conns:
            if other not in locs:
                problems.append(f"line {loc_lines[loc]}: location {loc!r} connects to unknown location {other!r}")
            elif loc not in locs[other]:
                problems.append(
                    f"line {loc_lines[loc]}: asymmetric connection {loc!r} -> {other!r} "
                    f"(missing {other!r} -> {loc!r})")
    for o in objs.values():
        if o.at not in locs and o.at not in objs:
            problems.append(f"line {o.line}: object {o.name!r} is at unknown entity {o.at!r}")
    for o in objs.values():
        if (o.props.get("container") or o.props.get("surface")) and (o.at not in locs or o.props.get("portable")):
            problems.append(f"line {o.line}: receptacle {o.name!r} must be a fixed object placed directly in a location")
    # containment chains must end at a location without cycles
    for o in objs.values():
        seen, cur = {o.name}, o.at
        while cur in objs:
            if cur in seen:
                problems.append(f"line {o.line}: containment cycle through {o.name!r}")
                break
            seen.add(cur)
            cur = objs[cur].at
    for t in spec.tasks.values():
        if not t.variations:
            problems.append(f"line {t.line}: task {t.task_id!r} has no variations")
        for v in t.variations.values():
            if v.start not in locs:
                problems.append(f"line {v.line}: variation {t.task_id} {v.index}: unknown start {v.start!r}")
            for obj, parent, line in v.places:
                if obj not in objs:
                    problems.append(f"line {line}: place refers to unknown object {obj!r}")
                if parent not in objs and parent not in locs:
                    problems.append(f"line {line}: place refers to unknown parent {parent!r}")
            for obj, key, _, line in v.sets:
                if obj not in objs:
                    problems.append(f"line {line}: set refers to unknown object {obj!r}")
                elif key not in OBJECT_KEYS - {"at"}:
                    problems.append(f"line {line}: set uses unknown key {key!r}")
            if len(v.golden) > MAX_STEPS:
                problems.append(f"line {v.line}: golden sequence longer than {MAX_STEPS} steps")


def load_world(path):
    """Parse and validate a world file; raises :class:`WorldFileError` listing every violation."""
    path = Path(path)
    return parse_world(path.read_text(), path)


def bundled_world_path(name="mini_science.world"):
    return Path(__file__).resolve().parent.parent / "data" / name
