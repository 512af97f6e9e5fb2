"""Single-file binary container used by datasets and checkpoints.

Layout: magic bytes, u32 format version, u32 manifest length, manifest as
UTF-8 JSON, then the raw little-endian float64 payload blocks in manifest
order.  The manifest lists every block's name and shape and carries a CRC32
of the payload, so truncation, version skew, and corruption give distinct
diagnostics.  No timestamps anywhere: equal content means equal bytes.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

__all__ = [
    "ContainerError",
    "VersionMismatchError",
    "TruncatedFileError",
    "ChecksumError",
    "write_container",
    "read_container",
]

FORMAT_VERSION = 1


class ContainerError(ValueError):
    """Malformed container file."""


class VersionMismatchError(ContainerError):
    pass


class TruncatedFileError(ContainerError):
    pass


class ChecksumError(ContainerError):
    pass


def write_container(path, magic: bytes, meta: dict, blocks: dict[str, np.ndarray]) -> None:
    """Write ``blocks`` (name -> float64 array) with ``meta`` merged into the manifest."""
    payload = bytearray()
    index = []
    for name, arr in blocks.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        index.append({"name": name, "shape": list(arr.shape)})
        payload += arr.tobytes()
    manifest = dict(meta)
    manifest["format_version"] = FORMAT_VERSION
    manifest["blocks"] = index
    manifest["payload_crc32"] = zlib.crc32(bytes(payload))
    manifest_bytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<II", FORMAT_VERSION, len(manifest_bytes)))
        f.write(manifest_bytes)
        f.write(payload)


def read_container(path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    """Read back (manifest, blocks); raises a distinct error per failure mode."""
    with open(path, "rb") as f:
        raw = f.read()
    head_len = len(magic) + 8
    if len(raw) < head_len:
        raise TruncatedFileError(f"{path}: shorter than the fixed header")
    if raw[: len(magic)] != magic:
        raise ContainerError(f"{path}: bad magic {raw[:len(magic)]!r}, expected {magic!r}")
    version, manifest_len = struct.unpack_from("<II", raw, len(magic))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, supported {FORMAT_VERSION}")
    if len(raw) < head_len + manifest_len:
        raise TruncatedFileError(f"{path}: manifest truncated")
    try:
        manifest = json.loads(raw[head_len : head_len + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerError(f"{path}: manifest is not valid JSON: {e}") from None
    payload = raw[head_len + manifest_len :]
    expected = sum(int(np.prod(b["shape"])) for b in manifest["blocks"]) * 8
    if len(payload) < expected:
        raise TruncatedFileError(
            f"{path}: payload has {len(payload)} bytes, manifest declares {expected}"
        )
    if zlib.crc32(payload[:expected]) != manifest["payload_crc32"]:
        raise ChecksumError(f"{path}: payload checksum mismatch")
    blocks = {}
    off = 0
    for entry in manifest["blocks"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f8", count=n, offset=off).reshape(shape)
        blocks[entry["name"]] = arr.copy()
        off += n * 8
    return manifest, blocks
