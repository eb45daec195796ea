"""Binary container for released functions.

Layout (little-endian)::

    magic "LSQF" | version u32 | family_tag u8 | epsilon f64 | I u32 | J u32
    | Q u64 | noise_scale f64 | kernel_kind u8 | kernel_normalized u8
    | bandwidth f64 | flags u8
    then I blocks of (length u32, descriptor bytes)
    then I*Q f64 aggregates, row-major

Bernstein and NoisySample releases reuse the layout with their own tags and a
single descriptor block.
"""

from __future__ import annotations

import json
import math
import struct

import numpy as np

from .baselines import BernsteinRelease, NoisySampleRelease
from .core import KernelKind, KernelSpec
from .fgt import FgtFamily
from .lsh import LshFamily
from .mechanism import FamilyTag, LsqFamily, PrivacyError, ReleasedFunction
from .rff import RffFamily

MAGIC = b"LSQF"
VERSION = 1
HEADER = struct.Struct("<4sIBdIIQdBBdB")
_BLOCK_LEN = struct.Struct("<I")
_KINDS = [KernelKind.GAUSSIAN, KernelKind.LAPLACIAN, KernelKind.CAUCHY]
_FLAG_CLAMP = 1

FAMILIES: dict[FamilyTag, type[LsqFamily]] = {
    FamilyTag.RFF: RffFamily,
    FamilyTag.FGT: FgtFamily,
    FamilyTag.LSH: LshFamily,
}

_BERNSTEIN_HEAD = struct.Struct("<III")
_NOISY_SAMPLE_HEAD = struct.Struct("<II")


class ContainerError(ValueError):
    """A release file that cannot be decoded."""


def family_for(released: ReleasedFunction) -> LsqFamily:
    """Rebuild the LSQ family needed to query ``released``."""
    cls = FAMILIES[released.family_tag]
    return cls.from_descriptor(released.descriptors[0], released.kernel)


def _pack(tag, epsilon, I, J, Q, scale, kernel: KernelSpec, flags, blocks, values) -> bytes:
    header = HEADER.pack(
        MAGIC, VERSION, int(tag), epsilon, I, J, Q, scale,
        _KINDS.index(kernel.kind), int(kernel.normalized), kernel.bandwidth, flags,
    )
    parts = [header]
    for b in blocks:
        parts.append(_BLOCK_LEN.pack(len(b)))
        parts.append(b)
    parts.append(np.ascontiguousarray(values, dtype="<f8").tobytes())
    return b"".join(parts)


def serialize_released(release) -> bytes:
    """Encode any release object; oracle-mode releases are refused."""
    if not getattr(release, "private", False):
        raise PrivacyError("refusing to serialize a noise-free (oracle mode) release")
    if isinstance(release, ReleasedFunction):
        fam = family_for(release)
        blocks = [fam.encode_descriptor(d) for d in release.descriptors]
        return _pack(
            release.family_tag, release.epsilon, release.repetitions, release.groups, release.Q,
            release.noise_scale, release.kernel, _FLAG_CLAMP if release.clamp else 0,
            blocks, release.aggregates,
        )
    if isinstance(release, BernsteinRelease):
        block = _BERNSTEIN_HEAD.pack(release.k, release.d, release.iterations) + release.domain_box.astype("<f8").tobytes()
        return _pack(
            FamilyTag.BERNSTEIN, release.epsilon, 1, 1, release.noisy_values.size,
            release.noise_scale, release.kernel, 0, [block], release.noisy_values,
        )
    if isinstance(release, NoisySampleRelease):
        block = _NOISY_SAMPLE_HEAD.pack(release.sample_size, release.dim)
        return _pack(
            FamilyTag.NOISYSAMPLE, release.epsilon, 1, 1, 1, release.noise_scale,
            release.kernel, 0, [block], np.array([release.value]),
        )
    raise TypeError(f"cannot serialize {type(release).__name__}")


def deserialize_released(buf: bytes):
    """Inverse of :func:`serialize_released`; raises :class:`ContainerError`."""
    buf = bytes(buf)
    if len(buf) < HEADER.size:
        raise ContainerError(f"truncated header: {len(buf)} of {HEADER.size} bytes")
    (magic, version, tag, eps, I, J, Q, scale, kind, normalized, bandwidth, flags) = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version} (expected {VERSION})")
    try:
        tag = FamilyTag(tag)
        kernel = KernelSpec(_KINDS[kind], bandwidth, bool(normalized))
    except (ValueError, IndexError) as exc:
        raise ContainerError(f"bad header field: {exc}") from None
    if I < 1 or J < 1:
        raise ContainerError("repetition and group counts must be positive")
    off = HEADER.size
    blocks = []
    for i in range(I):
        if off + _BLOCK_LEN.size > len(buf):
            raise ContainerError(f"truncated before descriptor block {i}")
        (length,) = _BLOCK_LEN.unpack_from(buf, off)
        off += _BLOCK_LEN.size
        if off + length > len(buf):
            raise ContainerError(f"descriptor block {i} claims {length} bytes past the end of the payload")
        blocks.append(buf[off : off + length])
        off += length
    expected = 8 * I * Q
    if len(buf) - off != expected:
        raise ContainerError(f"aggregate section has {len(buf) - off} bytes, expected {expected}")
    values = np.frombuffer(buf, "<f8", I * Q, off).astype(np.float64).reshape(I, Q)

    if tag in (FamilyTag.BERNSTEIN, FamilyTag.NOISYSAMPLE) and I != 1:
        raise ContainerError(f"{tag.name} release must have exactly one block")
    try:
        if tag is FamilyTag.BERNSTEIN:
            k, d, iterations = _BERNSTEIN_HEAD.unpack_from(blocks[0])
            if len(blocks[0]) != _BERNSTEIN_HEAD.size + 16 * d:
                raise ValueError("Bernstein descriptor block has the wrong length")
            box = np.frombuffer(blocks[0], "<f8", 2 * d, _BERNSTEIN_HEAD.size)
            return BernsteinRelease(k, d, values[0], eps, box.reshape(d, 2), scale, kernel, True, iterations)
        if tag is FamilyTag.NOISYSAMPLE:
            if len(blocks[0]) != _NOISY_SAMPLE_HEAD.size or Q != 1:
                raise ValueError("NoisySample release has the wrong shape")
            size, dim = _NOISY_SAMPLE_HEAD.unpack_from(blocks[0])
            return NoisySampleRelease(float(values[0, 0]), size, eps, scale, dim, kernel)
        cls = FAMILIES[tag]
        descs = tuple(cls.decode_descriptor(b) for b in blocks)
    except (ValueError, struct.error) as exc:
        raise ContainerError(f"bad descriptor block: {exc}") from None
    return ReleasedFunction(
        family_tag=tag,
        kernel=kernel,
        epsilon=eps,
        groups=J,
        noise_scale=scale,
        descriptors=descs,
        aggregates=values,
        clamp=bool(flags & _FLAG_CLAMP),
        dim=cls.from_descriptor(descs[0], kernel).dim,
    )


def save_release(release, path) -> None:
    data = serialize_released(release)
    with open(path, "wb") as fh:
        fh.write(data)


def load_release(path):
    with open(path, "rb") as fh:
        return deserialize_released(fh.read())


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def _descriptor_json(desc) -> dict:
    return {k: _jsonable(v) for k, v in vars(desc).items() if not k.startswith("_")}


def release_to_json(release) -> str:
    """Human-readable mirror of the container fields, for debugging."""
    kernel = {"kind": release.kernel.kind.value, "bandwidth": release.kernel.bandwidth,
              "normalized": release.kernel.normalized}
    if isinstance(release, ReleasedFunction):
        doc = {
            "version": VERSION,
            "family_tag": release.family_tag.name,
            "epsilon": _jsonable(release.epsilon),
            "I": release.repetitions,
            "J": release.groups,
            "Q": release.Q,
            "noise_scale": release.noise_scale,
            "kernel": kernel,
            "clamp": release.clamp,
            "descriptors": [_descriptor_json(d) for d in release.descriptors],
            "aggregates": release.aggregates.tolist(),
        }
    elif isinstance(release, BernsteinRelease):
        doc = {
            "version": VERSION, "family_tag": "BERNSTEIN", "epsilon": release.epsilon,
            "noise_scale": release.noise_scale, "kernel": kernel, "k": release.k, "d": release.d, "iterations": release.iterations,
            "domain_box": release.domain_box.tolist(), "noisy_values": release.noisy_values.tolist(),
        }
    elif isinstance(release, NoisySampleRelease):
        doc = {
            "version": VERSION, "family_tag": "NOISYSAMPLE", "epsilon": release.epsilon,
            "noise_scale": release.noise_scale, "kernel": kernel, "value": release.value,
            "sample_size": release.sample_size, "dim": release.dim,
        }
    else:
        raise TypeError(f"cannot export {type(release).__name__}")
    return json.dumps(doc, indent=2)
