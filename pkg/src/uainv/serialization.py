"""On-disk formats.

Models are JSON documents with a ``format`` tag and an integer ``version``.
Every float is stored as a C99 hex-float string (``float.hex``), so a
save/load cycle reproduces each 64-bit parameter bit for bit. Weight matrices
are stored row-major as ``[out][in]``.

``uainv.mlp`` (version 1)::

    {"format": "uainv.mlp", "version": 1,
     "layers": [{"in": 4, "out": 64, "activation": "relu",
                 "weight": [["0x1.8p-3", ...], ...], "bias": ["0x0p+0", ...]}, ...],
     "normalizer": null | {"x_mean": [...], "x_std": [...], "y_mean": [...], "y_std": [...]}}

``uainv.ensemble`` (version 1) holds ``variance_floor``, ``roster`` (the
mean-net hidden activation names, informational), ``normalizer`` and
``members``: a list of ``{"mean": <mlp body>, "var": <mlp body>}`` where each
body is the ``layers`` list of an ``uainv.mlp`` document.

Any model document may carry a free-form ``"meta"`` object (the CLI stores
the normalized training-data box and the forward-process spec there).

``uainv.inverse`` (version 1) is an ``uainv.mlp`` document with the other tag;
its network maps normalized performances to normalized designs.

Datasets are whitespace-separated text. Header lines start with ``#``::

    # uainv-dataset 1
    # design_dim 4
    # performance_dim 2
    # seed 0
    # spec {"kind": "robot_arm", ...}
    # corruption {"noise_regions": [], "sparse_regions": []}
    x0 x1 x2 x3 y0 y1
    <rows, %.17g>

Seventeen significant digits round-trip any double exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ensemble import DeepEnsemble, EnsembleMember
from .nfp import NO_CORRUPTION, CorruptionSpec, SampledDataset, nfp_from_dict, nfp_to_dict
from .nn import Activation, Dataset, Layer, Mlp, Normalizer
from .tandem import InverseNet

FORMAT_VERSION = 1
DATASET_MAGIC = "uainv-dataset"


class FormatError(ValueError):
    """A file does not match the expected format or version."""


def _hex(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 0:
        return float(a).hex()
    return [_hex(v) for v in a]


def _unhex(v):
    if isinstance(v, list):
        return np.array([_unhex(u) for u in v], dtype=np.float64)
    return float.fromhex(v) if isinstance(v, str) else float(v)


def _layers_to_list(net):
    return [
        {
            "in": int(L.weight.shape[1]),
            "out": int(L.weight.shape[0]),
            "activation": L.activation.name,
            "weight": _hex(L.weight),
            "bias": _hex(L.bias),
        }
        for L in net.layers
    ]


def _layers_from_list(items):
    layers = []
    for i, item in enumerate(items):
        W = _unhex(item["weight"]).reshape(item["out"], item["in"])
        b = _unhex(item["bias"]).reshape(item["out"])
        layers.append(Layer(W, b, Activation.parse(item["activation"])))
    return Mlp(tuple(layers))


def normalizer_to_dict(nz):
    if nz is None:
        return None
    return {k: _hex(getattr(nz, k)) for k in ("x_mean", "x_std", "y_mean", "y_std")}


def normalizer_from_dict(d):
    if d is None:
        return None
    return Normalizer(*(np.atleast_1d(_unhex(d[k])) for k in ("x_mean", "x_std", "y_mean", "y_std")))


def _check(doc, fmt):
    if doc.get("format") != fmt:
        raise FormatError(f"expected format {fmt!r}, found {doc.get('format')!r}")
    if doc.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported {fmt} version {doc.get('version')!r}")


def mlp_to_dict(net, normalizer=None, fmt="uainv.mlp", meta=None):
    doc = {"format": fmt, "version": FORMAT_VERSION, "layers": _layers_to_list(net),
           "normalizer": normalizer_to_dict(normalizer)}
    if meta:
        doc["meta"] = meta
    return doc


def mlp_from_dict(doc, fmt="uainv.mlp"):
    """Returns ``(Mlp, Normalizer or None)``."""
    _check(doc, fmt)
    return _layers_from_list(doc["layers"]), normalizer_from_dict(doc.get("normalizer"))


def ensemble_to_dict(ens, normalizer=None, meta=None):
    doc = {
        "format": "uainv.ensemble",
        "version": FORMAT_VERSION,
        "variance_floor": float(ens.variance_floor).hex(),
        "roster": [a.name for a in ens.roster],
        "normalizer": normalizer_to_dict(normalizer),
        "members": [{"mean": _layers_to_list(m.mean_net), "var": _layers_to_list(m.var_net)} for m in ens.members],
    }
    if meta:
        doc["meta"] = meta
    return doc


def ensemble_from_dict(doc):
    """Returns ``(DeepEnsemble, Normalizer or None)``."""
    _check(doc, "uainv.ensemble")
    members = tuple(EnsembleMember(_layers_from_list(m["mean"]), _layers_from_list(m["var"])) for m in doc["members"])
    ens = DeepEnsemble(members, _unhex(doc["variance_floor"]))
    return ens, normalizer_from_dict(doc.get("normalizer"))


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc


def save_mlp(path, net, normalizer=None, meta=None):
    _write_json(path, mlp_to_dict(net, normalizer, meta=meta))


def load_mlp(path):
    return mlp_from_dict(_read_json(path))


def save_ensemble(path, ens, normalizer=None, meta=None):
    _write_json(path, ensemble_to_dict(ens, normalizer, meta))


def load_ensemble(path):
    return ensemble_from_dict(_read_json(path))


def save_inverse(path, inv, normalizer=None, meta=None):
    _write_json(path, mlp_to_dict(inv.net, normalizer, fmt="uainv.inverse", meta=meta))


def load_inverse(path):
    net, nz = mlp_from_dict(_read_json(path), fmt="uainv.inverse")
    return InverseNet(net), nz


@dataclass(frozen=True)
class ModelBundle:
    kind: str
    model: object
    normalizer: Normalizer | None
    meta: dict


def load_model(path):
    """Load any model document, dispatching on its ``format`` tag.

    ``kind`` is one of ``"mlp"``, ``"ensemble"``, ``"inverse"``; ``meta`` is
    the free-form ``meta`` object (empty when absent).
    """
    doc = _read_json(path)
    fmt = doc.get("format")
    meta = doc.get("meta") or {}
    if fmt == "uainv.mlp":
        return ModelBundle("mlp", *mlp_from_dict(doc), meta)
    if fmt == "uainv.ensemble":
        return ModelBundle("ensemble", *ensemble_from_dict(doc), meta)
    if fmt == "uainv.inverse":
        net, nz = mlp_from_dict(doc, fmt)
        return ModelBundle("inverse", InverseNet(net), nz, meta)
    raise FormatError(f"{path}: unknown model format {fmt!r}")


def save_dataset(path, sampled):
    """Write a :class:`SampledDataset` (or a bare :class:`Dataset`)."""
    if isinstance(sampled, SampledDataset):
        data, seed, spec, corruption = sampled.data, sampled.seed, nfp_to_dict(sampled.spec), sampled.corruption
    else:
        data, seed, spec, corruption = sampled, None, None, NO_CORRUPTION
    d, p = data.design_dim, data.performance_dim
    header = [
        f"{DATASET_MAGIC} {FORMAT_VERSION}",
        f"design_dim {d}",
        f"performance_dim {p}",
        f"seed {json.dumps(seed)}",
        f"spec {json.dumps(spec)}",
        f"corruption {json.dumps(corruption.to_dict())}",
        " ".join([f"x{i}" for i in range(d)] + [f"y{j}" for j in range(p)]),
    ]
    rows = np.hstack([data.designs, data.performances])
    with open(path, "w") as fh:
        fh.write("\n".join("# " + h for h in header[:-1]) + "\n" + header[-1] + "\n")
        np.savetxt(fh, rows, fmt="%.17g")


def load_dataset(path):
    """Read a dataset file. Returns a :class:`SampledDataset` when provenance is present."""
    meta = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    body_start = 0
    for i, line in enumerate(lines):
        if not line.startswith("#"):
            body_start = i + 1  # column-name line
            break
        key, _, value = line[1:].strip().partition(" ")
        meta[key] = value
    if meta.get(DATASET_MAGIC) != str(FORMAT_VERSION):
        raise FormatError(f"{path}: not a version-{FORMAT_VERSION} dataset file")
    d, p = int(meta["design_dim"]), int(meta["performance_dim"])
    rows = np.loadtxt(lines[body_start:], ndmin=2) if len(lines) > body_start else np.empty((0, d + p))
    if rows.shape[1] != d + p:
        raise FormatError(f"{path}: expected {d + p} columns, found {rows.shape[1]}")
    data = Dataset(rows[:, :d], rows[:, d:])
    spec = json.loads(meta.get("spec", "null"))
    if spec is None:
        return data
    corruption = CorruptionSpec.from_dict(json.loads(meta.get("corruption", "{}")))
    return SampledDataset(data, json.loads(meta["seed"]), nfp_from_dict(spec), corruption, rows.shape[0])


def save_rows(path, Y, prefix="y"):
    """Plain target/design table: one column-name line, then ``%.17g`` rows."""
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    with open(path, "w") as fh:
        fh.write(" ".join(f"{prefix}{j}" for j in range(Y.shape[1])) + "\n")
        np.savetxt(fh, Y, fmt="%.17g")


def load_rows(path):
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip() and not ln.startswith("#")]
    if lines and not _is_numeric(lines[0]):
        lines = lines[1:]
    if not lines:
        raise FormatError(f"{path}: no rows")
    return np.loadtxt(lines, ndmin=2)


def _is_numeric(line):
    try:
        [float(t) for t in line.split()]
    except ValueError:
        return False
    return True
