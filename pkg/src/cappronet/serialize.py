"""Binary model container.

Layout (all integers little-endian)::

    bytes 0-3   magic b"CPNM"
    u32         format version (1)
    u32         header length H
    H bytes     UTF-8 JSON header: head kind, dims, activations, sigma state
    then, for every array named in header["arrays"], in order:
        u32     ndim
        u32 x ndim   shape
        f64 x prod(shape)   row-major payload

Weights and cached sigma matrices are stored verbatim, so a loaded model
reproduces the saved one bit for bit.
"""

import json
import struct

import numpy as np

from . import capsule as cap
from .backbone import Layer, Mlp
from .errors import ParseError
from .heads import CapsuleHead, GroupNeuronHead, LinearHead
from .train import Model

MAGIC = b"CPNM"
VERSION = 1


def _model_arrays(model):
    arrays = {}
    for i, layer in enumerate(model.backbone.layers):
        arrays[f"backbone.{i}.weight"] = layer.weight
        arrays[f"backbone.{i}.bias"] = layer.bias
    head = model.head
    if isinstance(head, CapsuleHead):
        for i, s in enumerate(head.subspaces):
            arrays[f"head.{i}.weight"] = s.weight
            arrays[f"head.{i}.sigma"] = s.sigma
    else:
        arrays["head.weight"] = head.weights
    return arrays


def save_model(path, model):
    head = model.head
    header = {
        "activations": [layer.activation for layer in model.backbone.layers],
        "head": head.kind,
        "num_classes": head.num_classes,
        "dim": head.dim,
    }
    if isinstance(head, CapsuleHead):
        header.update(
            capsule_dim=head.capsule_dim,
            sigma_mode=head.sigma_mode.value,
            reinit_every=head.reinit_every,
            subspaces=[dict(eps=s.eps, eps_used=s.eps_used, steps_since_exact=s.steps_since_exact)
                       for s in head.subspaces],
        )
    elif isinstance(head, GroupNeuronHead):
        header["capsule_dim"] = head.group_dim
    arrays = _model_arrays(model)
    header["arrays"] = list(arrays)
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC + struct.pack("<II", VERSION, len(blob)) + blob)
        for a in arrays.values():
            a = np.ascontiguousarray(a, dtype="<f8")
            f.write(struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape))
            f.write(a.tobytes())


def load_model(path):
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:4] != MAGIC:
        raise ParseError(f"{path}: not a model file (bad magic at byte 0)")
    if len(buf) < 12:
        raise ParseError(f"{path}: truncated header")
    version, hlen = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise ParseError(f"{path}: unsupported format version {version}")
    try:
        header = json.loads(buf[12:12 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: corrupt header at byte 12: {exc}") from None
    pos = 12 + hlen
    arrays = {}
    for name in header["arrays"]:
        if pos + 4 > len(buf):
            raise ParseError(f"{path}: truncated before array {name!r} at byte {pos}")
        (ndim,) = struct.unpack_from("<I", buf, pos)
        shape = struct.unpack_from(f"<{ndim}I", buf, pos + 4)
        pos += 4 + 4 * ndim
        nbytes = 8 * int(np.prod(shape))
        if pos + nbytes > len(buf):
            raise ParseError(f"{path}: array {name!r} payload truncated at byte {pos}")
        arrays[name] = np.frombuffer(buf, dtype="<f8", count=nbytes // 8, offset=pos).reshape(shape).astype(np.float64)
        pos += nbytes
    if pos != len(buf):
        raise ParseError(f"{path}: {len(buf) - pos} trailing bytes at byte {pos}")

    layers = [Layer(arrays[f"backbone.{i}.weight"], arrays[f"backbone.{i}.bias"], act)
              for i, act in enumerate(header["activations"])]
    backbone = Mlp(layers)
    kind = header["head"]
    if kind == "capsule":
        mode = cap.SigmaMode(header["sigma_mode"])
        subspaces = [
            cap.CapsuleSubspace(arrays[f"head.{i}.weight"], arrays[f"head.{i}.sigma"], mode,
                                meta["eps"], meta["eps_used"], meta["steps_since_exact"], i)
            for i, meta in enumerate(header["subspaces"])
        ]
        head = CapsuleHead(subspaces, header["reinit_every"])
    elif kind == "linear":
        head = LinearHead(arrays["head.weight"])
    elif kind == "group_neuron":
        head = GroupNeuronHead(arrays["head.weight"], header["capsule_dim"])
    else:
        raise ParseError(f"{path}: unknown head kind {kind!r}")
    return Model(backbone, head)
