"""Bundle directories: JSON documents with flat parameter arrays and shapes.

Floats are written with ``repr`` precision, so loading reproduces every
parameter bit for bit.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import FormatError, ShapeError
from ..model import AwarenessLevel, ModelConfig, ModelParams
from .io import atomic_dir, dump_json
from .preprocess import NormStats
from .train import BundleEntry, TrainedBundle

FORMAT_VERSION = 1
BUNDLE_FILE = "bundle.json"
HISTORY_FILE = "history.json"


def _params_doc(params: ModelParams):
    return {
        "format_version": FORMAT_VERSION,
        "region_tag": params.region_tag,
        "arrays": {n: {"shape": list(a.shape), "data": a.ravel().tolist()} for n, a in params.arrays.items()},
    }


def _params_file(tag):
    return f"params_{tag}.json"


def save_bundle(bundle: TrainedBundle, out_dir):
    """Write the bundle directory, replacing any previous one atomically."""
    entries = {}
    first = next(iter(bundle.entries.values())).params.config
    for tag, e in bundle.entries.items():
        entries[tag] = {"params_file": _params_file(tag), "norm": e.norm.to_dict()}
    doc = {
        "format_version": FORMAT_VERSION,
        "awareness_level": int(bundle.awareness_level),
        "features": list(bundle.features),
        "model": {"hidden_dim": first.hidden_dim, "n_layers": first.n_layers, "att_dim": first.att_dim},
        "entries": entries,
        "entry_order": list(bundle.entries),
        "provenance": bundle.provenance,
    }
    with atomic_dir(out_dir) as tmp:
        (tmp / BUNDLE_FILE).write_text(dump_json(doc))
        (tmp / HISTORY_FILE).write_text(dump_json({"format_version": FORMAT_VERSION, "history": bundle.history}))
        for tag, e in bundle.entries.items():
            (tmp / _params_file(tag)).write_text(json.dumps(_params_doc(e.params), sort_keys=True) + "\n")


def _read_json(path):
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise FormatError(f"bundle file {path.name} is missing") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path.name} is not valid JSON ({exc})") from exc


def _check_version(doc, name):
    got = doc.get("format_version") if isinstance(doc, dict) else None
    if got != FORMAT_VERSION:
        raise FormatError(f"{name}: format_version {got!r} is not supported (expected {FORMAT_VERSION})")


def load_bundle(path) -> TrainedBundle:
    path = Path(path)
    if not (path / BUNDLE_FILE).is_file():
        raise FileNotFoundError(f"no bundle found in {path}")
    doc = _read_json(path / BUNDLE_FILE)
    _check_version(doc, BUNDLE_FILE)
    try:
        level = AwarenessLevel(doc["awareness_level"])
        features = tuple(doc["features"])
        m = doc["model"]
        order = doc["entry_order"]
        if sorted(order) != sorted(doc["entries"]):
            raise FormatError(f"{BUNDLE_FILE}: entry_order does not match entries")
        entries = {}
        for tag in order:
            e = doc["entries"][tag]
            pdoc = _read_json(path / e["params_file"])
            _check_version(pdoc, e["params_file"])
            region_tag = pdoc["region_tag"]
            cfg = ModelConfig(features, m["hidden_dim"], m["n_layers"], m["att_dim"],
                              AwarenessLevel.LEVEL3 if region_tag is not None else level)
            stored = pdoc["arrays"]
            if set(stored) != set(cfg.param_shapes()):
                raise FormatError(f"{e['params_file']}: parameter names do not match the model")
            # json sorts keys; restore the configuration's canonical order
            arrays = {n: np.array(stored[n]["data"], dtype=np.float64).reshape(stored[n]["shape"])
                      for n in cfg.param_shapes()}
            entries[tag] = BundleEntry(ModelParams(cfg, arrays, region_tag), NormStats.from_dict(e["norm"]))
        hdoc = _read_json(path / HISTORY_FILE)
        _check_version(hdoc, HISTORY_FILE)
        history = hdoc["history"]
        provenance = doc["provenance"]
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError, ShapeError) as exc:
        raise FormatError(f"malformed bundle in {path}: {exc!r}") from exc
    return TrainedBundle(level, features, entries, history, provenance)
