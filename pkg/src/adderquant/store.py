"""Single-file container for models, quantized models and tensor bundles.

Layout (all integers little-endian, see docs/container_format.md)::

    0    8 bytes   magic b"ADQCNTR\\n"
    8    u64       manifest length M
    16   M bytes   manifest, UTF-8 JSON
    ...  zero padding to a multiple of 64
    D    blobs     raw little-endian arrays, each starting on a 64-byte boundary

Blob offsets in the manifest are relative to ``D``.  Floats live either in
blobs (float64) or in the manifest as shortest round-trip decimal text, so
save/load is bit-exact.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .clamp import ActRange
from .errors import (
    ContainerError,
    FormatVersionError,
    InvariantViolation,
    TruncatedContainerError,
    UnknownLayerKindError,
)
from .grouping import GroupPlan
from .kernels import ConvConfig
from .pipeline import KINDS, LayerDef, QuantizedLayer, QuantizedModel, _check_chain, forward_reference
from .quantizer import QuantSpec

MAGIC = b"ADQCNTR\n"
FORMAT = "adderquant-container"
FORMAT_VERSION = "1"
ALIGN = 64
DTYPES = {"<f8": np.dtype("<f8"), "<i4": np.dtype("<i4")}
CONTENT_KINDS = ("fp_model", "quantized_model", "tensors")


def _pad(n: int) -> int:
    return (-n) % ALIGN


class _BlobWriter:
    def __init__(self):
        self.table: dict[str, dict] = {}
        self.chunks: list[bytes] = []
        self.size = 0

    def add(self, name: str, a: np.ndarray) -> str:
        a = np.asarray(a)
        dtype = "<f8" if a.dtype.kind == "f" else "<i4"
        raw = np.ascontiguousarray(a, dtype=DTYPES[dtype]).tobytes()
        self.table[name] = {"dtype": dtype, "shape": list(a.shape), "offset": self.size, "nbytes": len(raw)}
        self.chunks.append(raw + b"\0" * _pad(len(raw)))
        self.size += len(raw) + _pad(len(raw))
        return name


# ---------------------------------------------------------------------------
# encoding


def _encode_layer(i: int, layer, blobs: _BlobWriter) -> dict:
    entry = {"kind": layer.kind, "stride": layer.conv.stride, "padding": layer.conv.padding}
    if isinstance(layer, LayerDef):
        entry["quantized"] = False
        entry["weights"] = blobs.add(f"layer{i}.weights", layer.weights)
        entry["bias"] = None if layer.bias is None else blobs.add(f"layer{i}.bias", layer.bias)
        return entry
    plan = layer.plan
    entry.update(
        quantized=True,
        bits=layer.specs[0].bits,
        r_x=layer.act_range.r_x,
        alpha=layer.act_range.alpha,
        n_calib=layer.act_range.n,
        groups=[[int(c) for c in ix] for ix in plan.groups],
        scales=[s.scale for s in layer.specs],
        objective=plan.objective,
        group_max=blobs.add(f"layer{i}.group_max", plan.group_max),
        means=blobs.add(f"layer{i}.means", plan.means),
        w_bar=[blobs.add(f"layer{i}.w_bar.{j}", wb) for j, wb in enumerate(layer.w_bar)],
        bias_fold=blobs.add(f"layer{i}.bias_fold", layer.bias_fold),
        bias_total=blobs.add(f"layer{i}.bias_total", layer.bias_total),
    )
    return entry


def _build(obj) -> tuple[dict, _BlobWriter]:
    blobs = _BlobWriter()
    if isinstance(obj, QuantizedModel):
        manifest = {
            "content": "quantized_model",
            "quant": {"bits": obj.bits, "g": obj.g, "alpha": obj.alpha, "feature": obj.feature},
            "layers": [_encode_layer(i, l, blobs) for i, l in enumerate(obj.layers)],
        }
    elif isinstance(obj, (list, tuple)) and obj and all(isinstance(l, LayerDef) for l in obj):
        manifest = {"content": "fp_model", "layers": [_encode_layer(i, l, blobs) for i, l in enumerate(obj)]}
    else:
        raise TypeError("save expects a list of LayerDef or a QuantizedModel; use save_tensors for tensors")
    return manifest, blobs


def _finish(manifest: dict, blobs: _BlobWriter) -> bytes:
    manifest = {"format": FORMAT, "format_version": FORMAT_VERSION, **manifest}
    manifest["blobs"] = blobs.table
    manifest["data_bytes"] = blobs.size
    text = json.dumps(manifest, sort_keys=True, allow_nan=False, separators=(",", ":")).encode()
    head = MAGIC + struct.pack("<Q", len(text)) + text
    head += b"\0" * _pad(len(head))
    return head + b"".join(blobs.chunks)


def _write_atomic(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> bytes:
    """Serialize a model (list of LayerDef) or QuantizedModel to container bytes."""
    return _finish(*_build(obj))


def save(obj, path) -> None:
    _write_atomic(path, dumps(obj))


def save_tensors(tensors, path) -> None:
    """Store an ordered list of float64 or int32 tensors."""
    blobs = _BlobWriter()
    names = [blobs.add(f"tensor{i}", np.asarray(t)) for i, t in enumerate(tensors)]
    _write_atomic(path, _finish({"content": "tensors", "tensors": names}, blobs))


# ---------------------------------------------------------------------------
# decoding


def _parse_header(data: bytes) -> tuple[dict, memoryview]:
    if len(data) < 16:
        raise TruncatedContainerError("file shorter than the container header")
    if data[:8] != MAGIC:
        raise ContainerError("not an adderquant container (bad magic)")
    (m,) = struct.unpack("<Q", data[8:16])
    if 16 + m > len(data):
        raise TruncatedContainerError("manifest extends past end of file")
    try:
        manifest = json.loads(bytes(data[16 : 16 + m]).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"manifest is not valid JSON: {exc}") from None
    if not isinstance(manifest, dict):
        raise ContainerError("manifest must be a JSON object")
    start = 16 + m + _pad(16 + m)
    payload = memoryview(data)[start:]
    _check_manifest_head(manifest)
    size = manifest.get("data_bytes")
    if not isinstance(size, int) or size < 0:
        raise ContainerError("manifest lacks a valid data_bytes field")
    if len(payload) < size:
        raise TruncatedContainerError(f"expected {size} data bytes, found {len(payload)}")
    if len(payload) > size:
        raise ContainerError("trailing bytes after the declared data section")
    return manifest, payload


def _check_manifest_head(manifest: dict) -> None:
    if manifest.get("format") != FORMAT:
        raise ContainerError(f"unknown container format {manifest.get('format')!r}")
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"unsupported format version {version!r} (expected {FORMAT_VERSION!r})")
    if manifest.get("content") not in CONTENT_KINDS:
        raise ContainerError(f"unknown content kind {manifest.get('content')!r}")
    if not isinstance(manifest.get("blobs"), dict):
        raise ContainerError("manifest lacks a blob table")


def _blob_meta(manifest: dict, name) -> tuple[np.dtype, tuple[int, ...], dict]:
    table = manifest["blobs"]
    if not isinstance(name, str) or name not in table:
        raise ContainerError(f"reference to unknown blob {name!r}")
    meta = table[name]
    try:
        dtype = DTYPES[meta["dtype"]]
        shape = tuple(int(n) for n in meta["shape"])
        nbytes = int(meta["nbytes"])
    except (KeyError, TypeError, ValueError):
        raise ContainerError(f"blob {name!r} has a malformed table entry") from None
    if any(n < 0 for n in shape):
        raise ContainerError(f"blob {name!r} has a negative dimension")
    if int(np.prod(shape, dtype=np.int64)) * dtype.itemsize != nbytes:
        raise ContainerError(f"blob {name!r}: shape {shape} does not match its length of {nbytes} bytes")
    return dtype, shape, meta


def _container_reader(manifest, payload):
    def read(name) -> np.ndarray:
        dtype, shape, meta = _blob_meta(manifest, name)
        offset = meta.get("offset")
        if not isinstance(offset, int) or offset < 0 or offset + meta["nbytes"] > len(payload):
            raise TruncatedContainerError(f"blob {name!r} lies outside the data section")
        raw = bytes(payload[offset : offset + meta["nbytes"]])
        return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()

    return read


def _directory_reader(manifest, root: Path):
    def read(name) -> np.ndarray:
        dtype, shape, meta = _blob_meta(manifest, name)
        fname = meta.get("file")
        if not isinstance(fname, str) or Path(fname).name != fname:
            raise ContainerError(f"blob {name!r} must name a file inside the directory")
        path = root / fname
        if not path.is_file():
            raise ContainerError(f"blob file {fname!r} is missing")
        raw = path.read_bytes()
        if len(raw) != meta["nbytes"]:
            raise ContainerError(f"blob file {fname!r} holds {len(raw)} bytes, manifest declares {meta['nbytes']}")
        return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()

    return read


def _field(entry: dict, key: str, kind=(int, float)):
    if key not in entry:
        raise ContainerError(f"layer entry lacks field {key!r}")
    value = entry[key]
    if isinstance(value, bool) or not isinstance(value, kind):
        raise ContainerError(f"layer field {key!r} has the wrong type")
    return value


def _conv(entry: dict) -> ConvConfig:
    try:
        return ConvConfig(_field(entry, "stride", int), _field(entry, "padding", int))
    except ValueError as exc:
        raise InvariantViolation(str(exc)) from None


def _decode_layer(entry, read):
    if not isinstance(entry, dict):
        raise ContainerError("layer entry must be an object")
    kind = entry.get("kind")
    if kind not in KINDS:
        raise UnknownLayerKindError(f"unknown layer kind {kind!r}")
    conv = _conv(entry)
    if not entry.get("quantized", False):
        bias = entry.get("bias")
        try:
            return LayerDef(kind, read(entry.get("weights")), conv, None if bias is None else read(bias))
        except ValueError as exc:
            if isinstance(exc, ContainerError):
                raise
            raise InvariantViolation(str(exc)) from None
    if kind != "adder":
        raise InvariantViolation("only adder layers can be quantized")
    groups = _field(entry, "groups", list)
    scales = _field(entry, "scales", list)
    w_refs = _field(entry, "w_bar", list)
    try:
        plan = GroupPlan(
            groups=[np.asarray(ix, dtype=np.int64) for ix in groups],
            group_max=read(entry.get("group_max")),
            means=read(entry.get("means")),
            objective=float(_field(entry, "objective")),
        )
        for ix in plan.groups:
            if ix.ndim != 1:
                raise ValueError("group index lists must be flat")
        bits = _field(entry, "bits", int)
        specs = [QuantSpec(bits, float(s)) for s in scales]
        act = ActRange(float(_field(entry, "r_x")), float(_field(entry, "alpha")), _field(entry, "n_calib", int))
        layer = QuantizedLayer(
            plan=plan,
            specs=specs,
            w_bar=[read(r) for r in w_refs],
            bias_fold=read(entry.get("bias_fold")),
            bias_total=read(entry.get("bias_total")),
            act_range=act,
            conv=conv,
        )
        for wb in layer.w_bar:
            if wb.dtype != np.dtype("<i4"):
                raise ValueError("quantized weights must be int32")
        if not 0 < act.alpha <= 1:
            raise ValueError("alpha outside (0, 1]")
        layer.validate()
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ContainerError):
            raise
        raise InvariantViolation(str(exc)) from None
    return layer


def _decode(manifest: dict, read):
    content = manifest["content"]
    if content == "tensors":
        names = manifest.get("tensors")
        if not isinstance(names, list):
            raise ContainerError("tensor bundle lacks its tensor list")
        return [read(n) for n in names]
    layers = manifest.get("layers")
    if not isinstance(layers, list) or not layers:
        raise ContainerError("model has no layer list")
    decoded = [_decode_layer(e, read) for e in layers]
    try:
        _check_chain(decoded)
    except ValueError as exc:
        raise InvariantViolation(str(exc)) from None
    if content == "fp_model":
        if any(isinstance(l, QuantizedLayer) for l in decoded):
            raise InvariantViolation("full-precision model contains quantized layers")
        return decoded
    quant = manifest.get("quant")
    if not isinstance(quant, dict):
        raise ContainerError("quantized model lacks its quant section")
    try:
        qm = QuantizedModel(
            decoded,
            bits=_field(quant, "bits", int),
            g=_field(quant, "g", int),
            alpha=float(_field(quant, "alpha")),
            feature=_field(quant, "feature", str),
        )
    except ContainerError:
        raise
    for l in decoded:
        if isinstance(l, QuantizedLayer) and (l.specs[0].bits != qm.bits or l.plan.g > qm.g):
            raise InvariantViolation("layer quantization disagrees with the model config")
    return qm


def loads(data: bytes):
    """Parse container bytes into a model, QuantizedModel or list of tensors."""
    manifest, payload = _parse_header(bytes(data))
    return _decode(manifest, _container_reader(manifest, payload))


def load(path):
    return loads(Path(path).read_bytes())


def load_tensors(path) -> list[np.ndarray]:
    out = load(path)
    if not (isinstance(out, list) and all(isinstance(t, np.ndarray) for t in out)):
        raise ContainerError(f"{path} does not hold a tensor bundle")
    return out


# ---------------------------------------------------------------------------
# plain-directory interchange


def save_directory(obj, root) -> None:
    """Write ``manifest.json`` plus one raw little-endian ``.bin`` file per tensor."""
    manifest, blobs = _build(obj)
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    table = {}
    for (name, meta), chunk in zip(blobs.table.items(), blobs.chunks):
        fname = name + ".bin"
        (root / fname).write_bytes(chunk[: meta["nbytes"]])
        table[name] = {"dtype": meta["dtype"], "shape": meta["shape"], "nbytes": meta["nbytes"], "file": fname}
    manifest = {"format": FORMAT, "format_version": FORMAT_VERSION, **manifest, "blobs": table}
    (root / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1, allow_nan=False))


def load_directory(root):
    """Import a model from a directory written by an external tool or ``save_directory``."""
    root = Path(root)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
    except FileNotFoundError:
        raise ContainerError(f"{root} has no manifest.json") from None
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"manifest is not valid JSON: {exc}") from None
    if not isinstance(manifest, dict):
        raise ContainerError("manifest must be a JSON object")
    _check_manifest_head(manifest)
    return _decode(manifest, _directory_reader(manifest, root))


# ---------------------------------------------------------------------------
# synthetic fixtures


def toy_model(
    seed: int = 0,
    widths=(3, 8, 8, 4),
    kernel: int = 3,
    fp_ends: bool = True,
    spread: float = 1.0,
    margin: float = 1.5,
    probe_size: int = 8,
) -> list[LayerDef]:
    """Deterministic random network for tests and demos.

    ``widths`` lists channel counts from input to output.  With ``fp_ends``
    (and at least three layers) the first and last layers are multiply
    convolutions, left unquantized; the rest are adder layers.

    Adder weights mimic trained adder networks, whose weight ranges exceed
    their input ranges: every channel's ``max|W|`` is ``margin`` times the
    layer's input range on a few probe inputs, times a log-normal factor
    ``exp(spread * |z|)``.
    """
    rng = np.random.default_rng(seed)
    n = len(widths) - 1
    if n < 1:
        raise ValueError("need at least two widths")
    probes = [rng.standard_normal((probe_size, probe_size, widths[0])) for _ in range(4)]
    layers = []
    for i in range(n):
        c_in, c_out = widths[i], widths[i + 1]
        kind = "vanilla" if fp_ends and n > 2 and i in (0, n - 1) else "adder"
        w = rng.uniform(-1.0, 1.0, (kernel, kernel, c_in, c_out))
        w /= np.abs(w).reshape(-1, c_out).max(axis=0)
        if kind == "adder":
            r = max(float(np.abs(p).max()) for p in probes)
            w *= margin * r * np.exp(spread * np.abs(rng.standard_normal(c_out)))
        else:
            w *= np.exp(spread * rng.standard_normal(c_out)) / np.sqrt(kernel * kernel * c_in)
        bias = 0.1 * rng.standard_normal(c_out)
        layer = LayerDef(kind, w, ConvConfig(1, kernel // 2), bias)
        layers.append(layer)
        probes = [forward_reference([layer], p) for p in probes]
    return layers


def toy_inputs(seed: int, n: int, size: int = 8, channels: int = 3) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [rng.standard_normal((size, size, channels)) for _ in range(n)]
