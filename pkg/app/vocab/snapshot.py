"""Binary vocabulary snapshot.

Little-endian layout::

    b"LIPOVOC1"
    u32 config length, config JSON (VocabConfig)
    u32 descriptor bits
    u32 frames,   per frame:  i64 frame id, u32 descriptor count
    u32 words,    words x (bits / 8) raw bytes
    u32 nodes,    per node:   u8 has centroid, [centroid bytes],
                              u32 children, u32 child ids..., u32 words, u32 word ids...
    u32 postings, per word:   u32 word id, u32 frames, (i64 frame id, u32 count)...
    u32 members, per member:  i64 frame id, u32 word id, descriptor bytes

Dictionaries are written in insertion order, so load followed by save gives
the same bytes.
"""
import io
import struct

import numpy as np
from pydantic import ValidationError

from app.core.config import VOCAB_MAGIC
from app.core.errors import SnapshotError
from app.schemas.config import VocabConfig
from app.vocab.index import VocabIndex, VocabNode

_U8 = struct.Struct("<B")
_U32 = struct.Struct("<I")
_I64 = struct.Struct("<q")


def dump_index(index: VocabIndex) -> bytes:
    out = io.BytesIO()
    w = out.write
    n_bytes = index.bits // 8
    with index._lock:
        w(VOCAB_MAGIC)
        cfg = index.cfg.model_dump_json().encode("utf-8")
        w(_U32.pack(len(cfg)))
        w(cfg)
        w(_U32.pack(index.bits))

        w(_U32.pack(len(index.frames)))
        for frame_id, count in index.frames.items():
            w(_I64.pack(frame_id))
            w(_U32.pack(count))

        w(_U32.pack(index.n_words))
        w(index.words.tobytes())

        w(_U32.pack(len(index.nodes)))
        for node in index.nodes:
            if node.centroid is None:
                w(_U8.pack(0))
            else:
                w(_U8.pack(1))
                w(np.asarray(node.centroid, dtype=np.uint8).reshape(n_bytes).tobytes())
            w(_U32.pack(len(node.children)))
            for child in node.children:
                w(_U32.pack(child))
            w(_U32.pack(len(node.words)))
            for word in node.words:
                w(_U32.pack(word))

        w(_U32.pack(len(index.inverted)))
        for word, postings in index.inverted.items():
            w(_U32.pack(word))
            w(_U32.pack(len(postings)))
            for frame_id, count in postings.items():
                w(_I64.pack(frame_id))
                w(_U32.pack(count))

        w(_U32.pack(len(index.member_frames)))
        for d, frame_id, word in zip(index.members, index.member_frames, index.member_words):
            w(_I64.pack(frame_id))
            w(_U32.pack(word))
            w(d.tobytes())
    return out.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise SnapshotError("Snapshot de vocabulario truncado")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: struct.Struct) -> int:
        return fmt.unpack(self.take(fmt.size))[0]


def load_index(data: bytes, name: str = "vocab") -> VocabIndex:
    r = _Reader(data)
    if r.take(len(VOCAB_MAGIC)) != VOCAB_MAGIC:
        raise SnapshotError("No es un snapshot LIPOVOC1")
    try:
        cfg = VocabConfig.model_validate_json(r.take(r.unpack(_U32)))
    except ValidationError as e:
        raise SnapshotError(f"Configuración del snapshot inválida: {e}") from e
    bits = r.unpack(_U32)
    if bits != cfg.descriptor_bits:
        raise SnapshotError(f"Anchura {bits} distinta de la configurada {cfg.descriptor_bits}")
    n_bytes = bits // 8

    index = VocabIndex(cfg, name=name)
    for _ in range(r.unpack(_U32)):
        frame_id = r.unpack(_I64)
        index.frames[frame_id] = r.unpack(_U32)

    n_words = r.unpack(_U32)
    words = np.frombuffer(r.take(n_words * n_bytes), dtype=np.uint8).reshape(n_words, n_bytes)
    for word in words:
        index._add_word(word)

    nodes = []
    for _ in range(r.unpack(_U32)):
        centroid = None
        if r.unpack(_U8):
            centroid = np.frombuffer(r.take(n_bytes), dtype=np.uint8).copy()
        children = [r.unpack(_U32) for _ in range(r.unpack(_U32))]
        node_words = [r.unpack(_U32) for _ in range(r.unpack(_U32))]
        nodes.append(VocabNode(centroid=centroid, children=children, words=node_words))
    if not nodes:
        raise SnapshotError("Snapshot sin nodos")
    for node in nodes:
        if any(c >= len(nodes) for c in node.children) or any(w >= n_words for w in node.words):
            raise SnapshotError("Referencia fuera de rango en la tabla de nodos")
        if node.children:
            node.child_centroids = np.stack([nodes[c].centroid for c in node.children])
    index.nodes = nodes

    for _ in range(r.unpack(_U32)):
        word = r.unpack(_U32)
        for _ in range(r.unpack(_U32)):
            frame_id = r.unpack(_I64)
            if frame_id not in index.frames:
                raise SnapshotError(f"Posting del frame {frame_id}, que no está registrado")
            index.inverted.add(word, frame_id, r.unpack(_U32))

    for _ in range(r.unpack(_U32)):
        frame_id = r.unpack(_I64)
        word = r.unpack(_U32)
        if frame_id not in index.frames or word >= n_words:
            raise SnapshotError(f"Descriptor almacenado con frame {frame_id} o palabra {word} desconocidos")
        index._add_member(np.frombuffer(r.take(n_bytes), dtype=np.uint8), frame_id, word)
    if r.pos != len(data):
        raise SnapshotError("Datos sobrantes al final del snapshot")
    return index
