"""Rule-based triple extraction, the inverse of the engine's text templates."""
from __future__ import annotations

import re

from .triples import Triple

_NAME = r"[a-z0-9][a-z0-9 ]*?"
_ROOM = re.compile(rf"This room is called the ({_NAME})\. In it, you see: (.*?)(?: You also see: (.*?))?(?= In your inventory|$)")
_SURFACE = re.compile(rf"On the ({_NAME}) is: ([^.]*)\.")
_CONTAINER = re.compile(rf"\ba ({_NAME}) \(containing ([^)]*)\)")
_DOOR = re.compile(rf"A door to the ({_NAME}) \(that is open\)")
_INVENTORY = re.compile(r"In your inventory, you see: ([^.]*)\.")
_HEAD = re.compile(rf"^a ({_NAME})(?:\.|,| \(|$)")


def _items(listing):
    out = []
    for piece in listing.split(", "):
        piece = piece.strip()
        if piece.startswith("a "):
            out.append(piece[2:])
    return out


def extract_triples(text):
    """hasA / in / connectedTo triples stated in engine-generated text."""
    if not text:
        return []
    found = []
    for m in _ROOM.finditer(text):
        room, contents, doors = m.group(1), m.group(2), m.group(3) or ""
        for entry in contents.split(" - "):
            head = _HEAD.match(entry.strip())
            if head:
                found.append(Triple(room, "hasA", head.group(1)))
        for d in _DOOR.finditer(doors):
            found.append(Triple(room, "connectedTo", d.group(1)))
    for m in _SURFACE.finditer(text):
        found.extend(Triple(m.group(1), "hasA", i) for i in _items(m.group(2)))
    for m in _CONTAINER.finditer(text):
        found.extend(Triple(i, "in", m.group(1)) for i in _items(m.group(2)))
    for m in _INVENTORY.finditer(text):
        found.extend(Triple(i, "in", "inventory") for i in _items(m.group(1)))
    return list(dict.fromkeys(found))
