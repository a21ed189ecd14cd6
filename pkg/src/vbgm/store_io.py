"""VBGM-1 container: binary persistence for the classifier state.

Layout, all little-endian:

    magic "VBGM" | u8 version=1 | u32 input_dim | u32 class_count |
    u32 session_count | u8 flags (bit0 standardizer, bit1 pca)
    [standardizer: input_dim f64 mean, input_dim f64 scale]
    [pca: u32 d_out, input_dim f64 mean, d_out*input_dim f64 components]
    per class: u32 class_id | u32 session | model_dim f64 mean |
               model_dim*(model_dim+1)/2 f64 packed lower triangle of L

`input_dim` is the raw feature dimension; the per-class model dimension is
the PCA output dimension when the pca flag is set, else `input_dim`.
PCA explained variances are not persisted (they do not affect predictions)
and load back as zeros.
"""

from __future__ import annotations

import struct

import numpy as np

from .clustering import PcaProjector
from .errors import FormatError
from .gaussians import ClassGaussian
from .pipeline import ModelStore

MAGIC = b"VBGM"
VERSION = 1

FLAG_STANDARDIZER = 0x01
FLAG_PCA = 0x02


def _pack_lower(chol: np.ndarray) -> np.ndarray:
    idx = np.tril_indices(chol.shape[0])
    return np.ascontiguousarray(chol[idx], dtype="<f8")


def _unpack_lower(packed: np.ndarray, dim: int) -> np.ndarray:
    chol = np.zeros((dim, dim), dtype=np.float64)
    chol[np.tril_indices(dim)] = packed
    return chol


def save_store(store: ModelStore, path) -> None:
    if store.standardizer is not None:
        input_dim = store.standardizer[0].size
    elif store.pca is not None:
        input_dim = store.pca.d_in
    else:
        input_dim = store.feature_dim
    flags = 0
    if store.standardizer is not None:
        flags |= FLAG_STANDARDIZER
    if store.pca is not None:
        flags |= FLAG_PCA

    chunks = [
        MAGIC,
        struct.pack("<BIIIB", VERSION, input_dim, store.num_classes, store.session_count, flags),
    ]
    if store.standardizer is not None:
        mean, scale = store.standardizer
        chunks.append(np.ascontiguousarray(mean, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(scale, dtype="<f8").tobytes())
    if store.pca is not None:
        chunks.append(struct.pack("<I", store.pca.d_out))
        chunks.append(np.ascontiguousarray(store.pca.mean, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(store.pca.components, dtype="<f8").tobytes())
    for cid in store.class_ids():
        g = store.classes[cid]
        chunks.append(struct.pack("<II", g.class_id, g.learned_in_session))
        chunks.append(np.ascontiguousarray(g.mean, dtype="<f8").tobytes())
        chunks.append(_pack_lower(g.chol_lower).tobytes())
    with open(path, "wb") as handle:
        handle.write(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        if self.offset + count > len(self.blob):
            raise FormatError(f"truncated while reading {what}", offset=self.offset)
        out = self.blob[self.offset : self.offset + count]
        self.offset += count
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def f64_array(self, count: int, what: str) -> np.ndarray:
        raw = self.take(8 * count, what)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def load_store(path) -> ModelStore:
    with open(path, "rb") as handle:
        blob = handle.read()
    reader = _Reader(blob)
    if reader.take(4, "magic") != MAGIC:
        raise FormatError("bad magic, expected 'VBGM'", offset=0)
    version = reader.u8("version")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    input_dim = reader.u32("input_dim")
    class_count = reader.u32("class_count")
    session_count = reader.u32("session_count")
    flags = reader.u8("flags")

    store = ModelStore.empty()
    store.session_count = session_count
    if flags & FLAG_STANDARDIZER:
        mean = reader.f64_array(input_dim, "standardizer mean")
        scale = reader.f64_array(input_dim, "standardizer scale")
        store.standardizer = (mean, scale)
    model_dim = input_dim
    if flags & FLAG_PCA:
        d_out = reader.u32("pca d_out")
        pca_mean = reader.f64_array(input_dim, "pca mean")
        components = reader.f64_array(d_out * input_dim, "pca components").reshape(d_out, input_dim)
        store.pca = PcaProjector(
            mean=pca_mean,
            components=components,
            explained_variance=np.zeros(d_out, dtype=np.float64),
        )
        model_dim = d_out
    store.feature_dim = model_dim

    packed_len = model_dim * (model_dim + 1) // 2
    for _ in range(class_count):
        class_id = reader.u32("class id")
        session = reader.u32("class session")
        mean = reader.f64_array(model_dim, "class mean")
        chol = _unpack_lower(reader.f64_array(packed_len, "class factor"), model_dim)
        log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
        store.classes[class_id] = ClassGaussian(
            class_id=class_id,
            mean=mean,
            chol_lower=chol,
            log_det_cov=log_det,
            learned_in_session=session,
        )
    if reader.offset != len(blob):
        raise FormatError("trailing bytes after the last class", offset=reader.offset)
    store.next_class_id = max(store.classes) + 1 if store.classes else 0
    return store
