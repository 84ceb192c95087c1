"""Named parameter collections and the binary checkpoint container."""
from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import ContractError
from .tensor import Tensor

MAGIC = b"MRA1"
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


class ParameterSet:
    """Ordered mapping of parameter id -> leaf Tensor with a version counter."""

    def __init__(self, tensors: dict[str, np.ndarray | Tensor] | None = None, version: int = 0):
        self._params: OrderedDict[str, Tensor] = OrderedDict()
        self.version = version
        for name, value in (tensors or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise ContractError(f"duplicate parameter id {name!r}")
        data = value.data if isinstance(value, Tensor) else np.asarray(value)
        t = Tensor(np.array(data, copy=True), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def keys(self):
        return self._params.keys()

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def ids(self) -> set[str]:
        return set(self._params)

    def with_prefix(self, prefix: str) -> list[str]:
        return [n for n in self._params if n.startswith(prefix)]

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: t.data for n, t in self._params.items()}

    def snapshot(self) -> "ParameterSnapshot":
        return ParameterSnapshot({n: t.data for n, t in self._params.items()}, self.version)

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        if set(arrays) != set(self._params):
            missing = set(self._params) ^ set(arrays)
            raise ContractError(f"parameter ids differ: {sorted(missing)}")
        for n, a in arrays.items():
            t = self._params[n]
            if a.shape != t.shape:
                raise ContractError(f"shape mismatch for {n}: {a.shape} vs {t.shape}")
            t.data = np.array(a, dtype=t.dtype, copy=True)

    def bump(self) -> None:
        self.version += 1

    def astype(self, dtype) -> "ParameterSet":
        return ParameterSet({n: t.data.astype(dtype) for n, t in self._params.items()}, self.version)


class ParameterSnapshot:
    """Immutable value copy of a ParameterSet, safe to hand to another worker."""

    def __init__(self, arrays: dict[str, np.ndarray], version: int):
        self._arrays = OrderedDict()
        for n, a in arrays.items():
            c = np.array(a, copy=True)
            c.setflags(write=False)
            self._arrays[n] = c
        self.version = version
        self._tensors = OrderedDict((n, Tensor(a, name=n)) for n, a in self._arrays.items())

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def keys(self):
        return self._arrays.keys()

    def ids(self) -> set[str]:
        return set(self._arrays)

    def arrays(self) -> dict[str, np.ndarray]:
        return dict(self._arrays)


def save_checkpoint(path, params: ParameterSet | ParameterSnapshot) -> None:
    """Write the ``MRA1`` container: header, little-endian payloads, version."""
    arrays = params.arrays()
    header = bytearray(MAGIC)
    header += struct.pack("<I", len(arrays))
    for name, a in arrays.items():
        raw = name.encode("utf-8")
        header += struct.pack("<H", len(raw)) + raw
        header += struct.pack("<BB", _DTYPE_CODES[a.dtype], a.ndim)
        header += struct.pack(f"<{a.ndim}Q", *a.shape)
    body = b"".join(np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<")).tobytes()
                    for a in arrays.values())
    Path(path).write_bytes(bytes(header) + body + struct.pack("<Q", params.version))


def load_checkpoint(path) -> ParameterSet:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ContractError(f"{path}: not an MRA1 checkpoint")
    off = 4
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    entries = []
    for _ in range(count):
        (n,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off:off + n].decode("utf-8")
        off += n
        code, rank = struct.unpack_from("<BB", buf, off)
        off += 2
        dims = struct.unpack_from(f"<{rank}Q", buf, off)
        off += 8 * rank
        entries.append((name, _CODE_DTYPES[code], dims))
    arrays = {}
    for name, dtype, dims in entries:
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        nbytes = size * dtype.itemsize
        arr = np.frombuffer(buf, dtype=dtype.newbyteorder("<"), count=size, offset=off)
        arrays[name] = arr.astype(dtype).reshape(dims)
        off += nbytes
    (version,) = struct.unpack_from("<Q", buf, off)
    if off + 8 != len(buf):
        raise ContractError(f"{path}: trailing bytes after version counter")
    return ParameterSet(arrays, version=version)
