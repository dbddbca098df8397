"""Canonical JSON serialization for every state type.

Encoding is deterministic: map keys are sorted, set elements are ordered
by their own canonical encoding, and ``canon`` renders any encodable
value to a minimal JSON string with sorted object keys. That string
doubles as the total order used for tie-breaking (least canonical string
wins), so "deterministic order" means the same thing on the wire, in
tests, and inside decision functions.

Scheme: JSON scalars (str, int, bool, None) encode as themselves; every
structured type is a dict tagged with ``"t"``. Bare JSON lists never
appear at the top level of a value, only inside tagged dicts, so
decoding dispatches on the tag alone.
"""

from __future__ import annotations

import json

from .lattice import Epoch, GrowSet, MergeList, MergeMap


def encode(obj):
    """Render a lattice/domain value as a JSON-compatible document."""
    # dispatch on exact type: all encodable structures are final classes
    codec = _CODECS_BY_TYPE.get(type(obj))
    if codec is not None:
        return codec.enc(obj)
    if obj is None or isinstance(obj, (str, bool, int)):
        return obj
    raise TypeError(f"no canonical encoding for {type(obj).__name__}")


def decode(doc):
    """Inverse of encode."""
    if isinstance(doc, dict):
        codec = _CODECS_BY_TAG.get(doc.get("t"))
        if codec is not None:
            return codec.dec(doc)
        raise ValueError(f"unknown tag {doc.get('t')!r}")
    if doc is None or isinstance(doc, (str, bool, int)):
        return doc
    raise ValueError(f"cannot decode {type(doc).__name__}")


def canon(obj) -> str:
    """Canonical string form; the deterministic total order on values."""
    return _dump(encode(obj))


def dumps(obj) -> str:
    """Canonical JSON text of a value (same bytes as ``canon``)."""
    return canon(obj)


def loads(text: str):
    return decode(json.loads(text))


def _dump(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


class _Codec:
    __slots__ = ("enc", "dec")

    def __init__(self, enc, dec):
        self.enc = enc
        self.dec = dec


_CODECS_BY_TYPE: dict = {}
_CODECS_BY_TAG: dict = {}


def register(type_, tag: str, enc, dec) -> None:
    """Hook a domain type (votes, ballots, operations...) into the codec.

    ``enc(obj) -> dict`` must emit the given tag; ``dec(doc) -> obj``
    inverts it. Registration happens at import time of the defining
    module; tags must be unique.
    """
    if tag in _CODECS_BY_TAG:
        raise ValueError(f"tag {tag!r} already registered")
    codec = _Codec(enc, dec)
    _CODECS_BY_TYPE[type_] = codec
    _CODECS_BY_TAG[tag] = codec


def _encode_set(obj):
    encoded = [encode(e) for e in obj.elements]
    encoded.sort(key=_dump)
    return {"t": "set", "v": encoded}


register(tuple, "tup",
         lambda obj: {"t": "tup", "v": [encode(x) for x in obj]},
         lambda doc: tuple(decode(x) for x in doc["v"]))
register(GrowSet, "set",
         _encode_set,
         lambda doc: GrowSet(frozenset(decode(x) for x in doc["v"])))
register(MergeMap, "map",
         lambda obj: {"t": "map", "v": [[encode(k), encode(v)] for k, v in obj.entries]},
         lambda doc: MergeMap(tuple((decode(k), decode(v)) for k, v in doc["v"])))
register(MergeList, "list",
         lambda obj: {"t": "list", "v": [encode(x) for x in obj.items]},
         lambda doc: MergeList(tuple(decode(x) for x in doc["v"])))
register(Epoch, "epoch",
         lambda obj: {"t": "epoch", "n": obj.counter, "v": encode(obj.value)},
         lambda doc: Epoch(doc["n"], decode(doc["v"])))
