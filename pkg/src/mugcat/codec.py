"""Canonical JSON encoding shared by the gateway, the wire protocol, and goldens.

Canonical form: UTF-8, no whitespace, keys in model declaration order,
binary fields base64. decode(encode(x)) == x bit-exactly for every domain
type.
"""

import json
from typing import Type, TypeVar

from pydantic import BaseModel, ValidationError

from .errors import DecodeError, MugcatError

M = TypeVar("M", bound=BaseModel)


def to_jsonable(model: BaseModel) -> dict:
    return model.model_dump(mode="json")


def encode(model: BaseModel) -> bytes:
    return json.dumps(
        to_jsonable(model), separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


def _path(loc: tuple) -> str:
    out = "$"
    for part in loc:
        out += f"[{part}]" if isinstance(part, int) else f".{part}"
    return out


def decode(cls: Type[M], data: bytes | str | dict) -> M:
    if isinstance(data, (bytes, str)):
        try:
            payload = json.loads(data)
        except json.JSONDecodeError as e:
            raise DecodeError("$", f"invalid JSON: {e}")
    else:
        payload = data
    try:
        return cls.model_validate(payload)
    except ValidationError as e:
        first = e.errors()[0]
        raise DecodeError(_path(tuple(first["loc"])), first["msg"])
    except MugcatError as e:
        raise DecodeError("$", f"{e.code}: {e}")
