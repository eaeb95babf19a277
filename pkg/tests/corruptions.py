"""Corrupted container fixtures, built by editing a valid container's bytes."""
import json
import struct

import numpy as np

MAGIC = b"ADQCNTR\n"


def split(data: bytes):
    (m,) = struct.unpack("<Q", data[8:16])
    start = 16 + m + (-(16 + m)) % 64
    return json.loads(data[16 : 16 + m]), data[start:]


def join(manifest: dict, payload: bytes) -> bytes:
    text = json.dumps(manifest).encode()
    head = MAGIC + struct.pack("<Q", len(text)) + text
    return head + b"\0" * ((-len(head)) % 64) + payload


def _edit(data, fn):
    manifest, payload = split(data)
    fn(manifest)
    return join(manifest, payload)


def _first_quantized(manifest):
    return next(l for l in manifest["layers"] if l.get("quantized"))


def _set(d, key, value):
    d[key] = value


def _poke_code(data):
    # overwrite the first int32 code of the first group with a huge value
    manifest, payload = split(data)
    meta = manifest["blobs"][_first_quantized(manifest)["w_bar"][0]]
    payload = bytearray(payload)
    payload[meta["offset"] : meta["offset"] + 4] = np.int32(10**6).tobytes()
    return join(manifest, bytes(payload))


def _bad_blob_length(m):
    name = _first_quantized(m)["w_bar"][0]
    m["blobs"][name]["nbytes"] += 4


def _duplicate_channel(m):
    groups = _first_quantized(m)["groups"]
    groups[-1][0] = groups[0][0]


def corruption_fixtures(valid: bytes) -> dict:
    """Ten distinct ways to break a valid quantized-model container."""
    return {
        "truncated_header": valid[:10],
        "truncated_data": valid[:-100],
        "bad_magic": b"NOTADQ!\n" + valid[8:],
        "manifest_past_eof": valid[:8] + struct.pack("<Q", len(valid)) + valid[16:],
        "garbled_manifest": valid[:16] + b"#" + valid[17:],
        "future_version": _edit(valid, lambda m: _set(m, "format_version", "2")),
        "unknown_kind": _edit(valid, lambda m: _set(_first_quantized(m), "kind", "depthwise")),
        "blob_length_mismatch": _edit(valid, _bad_blob_length),
        "not_a_partition": _edit(valid, _duplicate_channel),
        "code_out_of_bounds": _poke_code(valid),
    }
