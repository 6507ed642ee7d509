"""Parsing and formatting of signal string identifiers.

A string identifier names one stored data signal:

    str_id = [schema ":"] body [":" int [":" int]] ["[" units "]"]
    schema = "CDB" / "DAQ" / "FS"

The CDB schema (the default) locates a generic signal by alias, by
``name.source`` or by numeric id; DAQ and FS locate it through an
acquisition channel key ``computer/board/channel``.  The two trailing
integers are the record number and the revision; negative values are
relative (-1 = latest, -k = k-th latest).  The optional units tag selects
the physical-units view (``default``) or the stored raw levels (``raw``).
Whitespace is never permitted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .errors import IdentifierSyntaxError, InvalidRefError, UnknownSchemaError

__all__ = [
    "Schema",
    "ByAlias",
    "ByName",
    "ById",
    "GenericLocator",
    "ChannelKey",
    "SignalRef",
    "parse_str_id",
    "parse_gs_str_id",
    "format_str_id",
    "format_gs_str_id",
    "is_valid_token",
    "is_valid_alias",
    "UNITS_TAGS",
]


class Schema(str, Enum):
    CDB = "CDB"
    DAQ = "DAQ"
    FS = "FS"


UNITS_TAGS = ("default", "raw")

# CDB locator tokens exclude all structural characters plus '.', which
# separates name from source.  Channel-key segments may contain dots.
_TOKEN_RE = re.compile(r"[^:/\[\].\s]+\Z")
_SEGMENT_RE = re.compile(r"[^:/\[\]\s]+\Z")
_INT_RE = re.compile(r"-?[0-9]+\Z")
_SCHEMA_WORDS = frozenset(s.value for s in Schema)


@dataclass(frozen=True)
class ByAlias:
    alias: str


@dataclass(frozen=True)
class ByName:
    name: str
    source: str


@dataclass(frozen=True)
class ById:
    id: int


GenericLocator = ByAlias | ByName | ById


@dataclass(frozen=True)
class ChannelKey:
    computer_id: str
    board_id: str
    channel_id: str

    def validate(self) -> None:
        for part in (self.computer_id, self.board_id, self.channel_id):
            if not _SEGMENT_RE.fullmatch(part):
                raise InvalidRefError(f"bad channel key segment {part!r}")

    def __str__(self) -> str:
        return f"{self.computer_id}/{self.board_id}/{self.channel_id}"


@dataclass(frozen=True)
class SignalRef:
    schema: Schema
    locator: GenericLocator | ChannelKey
    record_number: int = -1
    revision: int = -1
    units_tag: str = "default"


def is_valid_token(s: str) -> bool:
    """True when ``s`` can appear as a name or data-source token."""
    return bool(_TOKEN_RE.fullmatch(s))


def is_valid_alias(s: str) -> bool:
    """True when ``s`` can appear as an alias in a string identifier."""
    return (
        is_valid_token(s)
        and not (s.isascii() and s.isdigit())
        and s not in _SCHEMA_WORDS
    )


def _fail(text: str, position: int, *expected: str) -> IdentifierSyntaxError:
    return IdentifierSyntaxError(text, position, expected)


def _parse_locator(text: str, body: str, pos: int) -> GenericLocator:
    if not body:
        raise _fail(text, pos, "generic signal locator")
    dots = body.count(".")
    if dots == 0:
        if not _TOKEN_RE.fullmatch(body):
            raise _fail(text, pos, "generic signal locator")
        if body.isascii() and body.isdigit():
            return ById(int(body))
        return ByAlias(body)
    if dots == 1:
        name, source = body.split(".")
        if not (_TOKEN_RE.fullmatch(name) and _TOKEN_RE.fullmatch(source)):
            raise _fail(text, pos, "name.source locator")
        return ByName(name, source)
    raise _fail(text, pos, "locator with at most one '.'")


def _parse_channel_key(text: str, body: str, pos: int) -> ChannelKey:
    segments = body.split("/")
    if len(segments) != 3 or not all(_SEGMENT_RE.fullmatch(s) for s in segments):
        raise _fail(text, pos, "channel key 'computer/board/channel'")
    return ChannelKey(*segments)


def _parse_int(text: str, part: str, pos: int, what: str) -> int:
    if not _INT_RE.fullmatch(part):
        raise _fail(text, pos, what)
    return int(part)


def parse_str_id(text: str) -> SignalRef:
    """Parse a string identifier into a :class:`SignalRef`.

    Missing components default to schema CDB, record -1, revision -1 and
    units tag ``default``.  Raises :class:`IdentifierSyntaxError` on
    malformed input (with the failing position and the expected tokens) and
    :class:`UnknownSchemaError` when a channel-style identifier carries a
    prefix other than CDB/DAQ/FS.
    """
    if not text:
        raise _fail(text, 0, "signal identifier")
    for i, ch in enumerate(text):
        if ch.isspace():
            raise _fail(text, i, "no whitespace")

    units_tag = "default"
    core = text
    if text.endswith("]"):
        lb = text.rfind("[")
        if lb < 0:
            raise _fail(text, len(text) - 1, "'[' opening the units tag")
        units_tag = text[lb + 1 : -1]
        if units_tag not in UNITS_TAGS:
            raise _fail(text, lb + 1, "units tag 'default' or 'raw'")
        core = text[:lb]

    parts: list[str] = []
    positions: list[int] = []
    offset = 0
    for part in core.split(":"):
        parts.append(part)
        positions.append(offset)
        offset += len(part) + 1

    schema = Schema.CDB
    idx = 0
    if parts[0] in _SCHEMA_WORDS:
        if len(parts) == 1:
            raise _fail(text, len(core), "':' after schema prefix")
        schema = Schema(parts[0])
        idx = 1
    elif len(parts) > 1 and "/" in parts[1]:
        # A channel key in the second slot means the first was meant as a
        # schema prefix.
        raise UnknownSchemaError(parts[0])

    body, body_pos = parts[idx], positions[idx]
    locator: GenericLocator | ChannelKey
    if schema is Schema.CDB:
        if "/" in body:
            raise _fail(text, body_pos + body.index("/"), "DAQ: or FS: schema prefix")
        locator = _parse_locator(text, body, body_pos)
    else:
        locator = _parse_channel_key(text, body, body_pos)

    rest = parts[idx + 1 :]
    rest_pos = positions[idx + 1 :]
    if len(rest) > 2:
        raise _fail(text, rest_pos[2], "end of identifier or '['")
    record_number = -1
    revision = -1
    if len(rest) >= 1:
        record_number = _parse_int(text, rest[0], rest_pos[0], "integer record number")
    if len(rest) == 2:
        revision = _parse_int(text, rest[1], rest_pos[1], "integer revision")

    return SignalRef(schema, locator, record_number, revision, units_tag)


def parse_gs_str_id(text: str) -> GenericLocator:
    """Parse a bare generic-signal locator (no record, revision or units)."""
    if not text:
        raise _fail(text, 0, "generic signal locator")
    for i, ch in enumerate(text):
        if ch.isspace():
            raise _fail(text, i, "no whitespace")
    if ":" in text or "/" in text or "[" in text or "]" in text:
        raise _fail(text, 0, "bare generic signal locator")
    return _parse_locator(text, text, 0)


def _format_locator(locator: GenericLocator) -> str:
    if isinstance(locator, ByAlias):
        alias = locator.alias
        if not _TOKEN_RE.fullmatch(alias):
            raise InvalidRefError(f"bad alias token {alias!r}")
        if alias.isascii() and alias.isdigit():
            raise InvalidRefError(f"alias {alias!r} is indistinguishable from a numeric id")
        if alias in _SCHEMA_WORDS:
            raise InvalidRefError(f"alias {alias!r} collides with a schema keyword")
        return alias
    if isinstance(locator, ByName):
        for part in (locator.name, locator.source):
            if not _TOKEN_RE.fullmatch(part):
                raise InvalidRefError(f"bad name/source token {part!r}")
        return f"{locator.name}.{locator.source}"
    if isinstance(locator, ById):
        if locator.id < 0:
            raise InvalidRefError(f"negative generic signal id {locator.id}")
        return str(locator.id)
    raise InvalidRefError(f"CDB schema requires a generic locator, got {locator!r}")


def format_gs_str_id(locator: GenericLocator) -> str:
    """Canonical string form of a generic-signal locator."""
    return _format_locator(locator)


def format_str_id(ref: SignalRef) -> str:
    """Canonical string form of a :class:`SignalRef`.

    The schema prefix is emitted for DAQ/FS only, record and revision are
    always emitted and ``[default]`` is suppressed, so every reference has
    exactly one canonical spelling.  Raises :class:`InvalidRefError` when
    the reference violates its invariants.
    """
    if ref.units_tag not in UNITS_TAGS:
        raise InvalidRefError(f"bad units tag {ref.units_tag!r}")
    if ref.schema is Schema.CDB:
        if isinstance(ref.locator, ChannelKey):
            raise InvalidRefError("CDB schema requires a generic locator")
        body = _format_locator(ref.locator)
        prefix = ""
    else:
        if not isinstance(ref.locator, ChannelKey):
            raise InvalidRefError(f"{ref.schema.value} schema requires a channel key")
        ref.locator.validate()
        body = str(ref.locator)
        prefix = f"{ref.schema.value}:"
    units = "" if ref.units_tag == "default" else f"[{ref.units_tag}]"
    return f"{prefix}{body}:{ref.record_number}:{ref.revision}{units}"
