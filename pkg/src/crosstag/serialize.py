"""Versioned binary model container.

Byte layout, all integers little-endian:

    offset  size        content
    0       4           magic b"XTAG"
    4       4           format version (u32) = 1
    8       8           header length H (u64)
    16      H           UTF-8 JSON header
    16+H    rest        payload: float64 arrays, little-endian, packed
                        back to back in header-declared order

The header carries the model kind, tag set, vocabularies, dimension
block, and a tensor directory of (name, shape, offset) entries whose
offsets index float64 elements (not bytes) in the payload.  Everything
needed to rebuild the model is in the file; loading reproduces scoring
bit for bit.  Writes go to a temp file in the target directory followed
by an atomic rename.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from typing import Any

import numpy as np

from .corpus import TagSet
from .features import FeatureIndex, FeatureTemplateSet
from .loglinear import LogLinearModel
from .neural import Dims, NeuralModel

MAGIC = b"XTAG"
FORMAT_VERSION = 1


class SerializeError(ValueError):
    pass


def write_atomic(path: str, data: bytes) -> None:
    """Write ``data`` to ``path`` via temp file + rename in one directory."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _pack(header: dict[str, Any], payload: bytes) -> bytes:
    blob = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<I", FORMAT_VERSION) + struct.pack("<Q", len(blob)) + blob + payload


def _unpack(data: bytes) -> tuple[dict[str, Any], bytes]:
    if len(data) < 16 or data[:4] != MAGIC:
        raise SerializeError("not a model file (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise SerializeError(f"unsupported model format version {version}")
    (hlen,) = struct.unpack_from("<Q", data, 8)
    if len(data) < 16 + hlen:
        raise SerializeError("truncated model file")
    try:
        header = json.loads(data[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SerializeError(f"corrupt model header: {exc}") from exc
    return header, data[16 + hlen :]


def _vocab_list(vocab: dict[str, int]) -> list[str]:
    # id 0 is UNK and has no surface form; ids 1..N listed in order
    items = sorted(vocab.items(), key=lambda kv: kv[1])
    if [i for _, i in items] != list(range(1, len(items) + 1)):
        raise SerializeError("vocabulary ids are not dense")
    return [w for w, _ in items]


def save_model(model: LogLinearModel | NeuralModel, path: str) -> None:
    if isinstance(model, LogLinearModel):
        header = {
            "kind": "loglinear",
            "entity_types": list(model.tagset.entity_types),
            "templates": {
                "window": model.templates.window,
                "affix_max": model.templates.affix_max,
            },
            "conjoin_language": model.conjoin_language,
            "languages": list(model.languages),
            "features": model.index.feature_strings(),
            "tensors": [{"name": "weights", "shape": [len(model.weights)], "offset": 0}],
        }
        payload = np.ascontiguousarray(model.weights, dtype="<f8").tobytes()
    elif isinstance(model, NeuralModel):
        tensors = []
        offset = 0
        for name in model.parameter_names():
            view = model.view(name)
            tensors.append(
                {"name": name, "shape": list(view.shape), "offset": offset}
            )
            offset += view.size
        header = {
            "kind": f"neural-{model.kind}",
            "entity_types": list(model.tagset.entity_types),
            "dims": {k: getattr(model.dims, k) for k in Dims.__dataclass_fields__},
            "languages": list(model.languages),
            "tag_dependent_emission": model.tag_dependent_emission,
            "seed": model.seed,
            "char_vocab": _vocab_list(model.char_vocab),
            "word_vocabs": {
                lang: _vocab_list(v) for lang, v in model.word_vocabs.items()
            },
            "tensors": tensors,
        }
        payload = np.ascontiguousarray(model.params, dtype="<f8").tobytes()
    else:
        raise SerializeError(f"cannot serialize {type(model).__name__}")
    write_atomic(path, _pack(header, payload))


def load_model(path: str) -> LogLinearModel | NeuralModel:
    with open(path, "rb") as fh:
        data = fh.read()
    header, payload = _unpack(data)
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    kind = header.get("kind")
    tagset = TagSet(tuple(header["entity_types"]))
    if kind == "loglinear":
        tpl = header["templates"]
        model = LogLinearModel(
            tagset,
            FeatureTemplateSet(window=tpl["window"], affix_max=tpl["affix_max"]),
            conjoin_language=header["conjoin_language"],
        )
        model.index = FeatureIndex.from_strings(header["features"])
        model.languages = tuple(header["languages"])
        (entry,) = header["tensors"]
        n = entry["shape"][0]
        if n != len(model.index) or values.size != n:
            raise SerializeError("weight count does not match feature table")
        model.weights = values.copy()
        return model
    if kind in ("neural-mono", "neural-xling"):
        dims = Dims(**header["dims"])
        char_vocab = {c: i + 1 for i, c in enumerate(header["char_vocab"])}
        word_vocabs = {
            lang: {w: i + 1 for i, w in enumerate(words)}
            for lang, words in header["word_vocabs"].items()
        }
        model = NeuralModel(
            tagset,
            dims,
            kind.split("-", 1)[1],
            tuple(header["languages"]),
            char_vocab,
            word_vocabs,
            tag_dependent_emission=header["tag_dependent_emission"],
            seed=header.get("seed", 0),
        )
        if values.size != model.n_params:
            raise SerializeError(
                f"payload holds {values.size} parameters, model needs {model.n_params}"
            )
        for entry in header["tensors"]:
            name, shape, off = entry["name"], tuple(entry["shape"]), entry["offset"]
            view = model.view(name)
            if view.shape != shape:
                raise SerializeError(f"tensor {name} has shape {shape}, expected {view.shape}")
            view[...] = values[off : off + view.size].reshape(shape)
        return model
    raise SerializeError(f"unknown model kind {kind!r}")
