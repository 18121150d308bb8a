"""A trained tagger bundle and its on-disk format.

The model file is a zip archive holding ``meta.json`` (format version,
dimensions, tagsets, vocabulary) and one ``.npy`` member per parameter array.
Member timestamps are fixed so identical models produce identical bytes.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass

import numpy as np

from .corpus import TagSet, Vocabulary
from .neural import ModelParams, predict

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


class ModelFormatError(Exception):
    pass


@dataclass
class Tagger:
    params: ModelParams
    vocab: Vocabulary
    gold_tagset: TagSet
    proj_tagset: TagSet

    def tag_ids(self, tokens) -> list[int]:
        return predict(self.params, self.vocab.encode(tokens))

    def tag(self, tokens) -> list[str]:
        return [self.gold_tagset.label(i) for i in self.tag_ids(tokens)]


def _member(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def save_model(model: Tagger, path) -> None:
    p = model.params
    meta = {
        "format_version": FORMAT_VERSION,
        "vocab_size": p.vocab_size,
        "emb_dim": p.emb_dim,
        "hidden_dim": p.hidden_dim,
        "gold_tags": list(model.gold_tagset.labels),
        "proj_tags": list(model.proj_tagset.labels),
        "vocab": model.vocab.tokens,
        "min_count": model.vocab.min_count,
        "arrays": [name for name, _ in p.named_arrays()],
    }
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr(_member("meta.json"), json.dumps(meta, ensure_ascii=False, sort_keys=True))
        for name, arr in p.named_arrays():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr, dtype=np.float64),
                                      allow_pickle=False)
            zf.writestr(_member(f"arrays/{name}.npy"), buf.getvalue())


def load_model(path, gold_tagset: TagSet | None = None,
               proj_tagset: TagSet | None = None) -> Tagger:
    """Load a model file, optionally insisting on particular tagsets."""
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json").decode("utf-8"))
            if meta.get("format_version") != FORMAT_VERSION:
                raise ModelFormatError(
                    f"unsupported model format version {meta.get('format_version')!r}")
            arrays = {}
            for name in meta["arrays"]:
                with zf.open(f"arrays/{name}.npy") as f:
                    arrays[name] = np.lib.format.read_array(io.BytesIO(f.read()), allow_pickle=False)
    except ModelFormatError:
        raise
    except (zipfile.BadZipFile, KeyError, ValueError, EOFError, OSError) as e:
        if isinstance(e, FileNotFoundError):
            raise
        raise ModelFormatError(f"cannot read model file {path}: {e}") from e

    try:
        params = ModelParams.from_arrays(arrays)
        params.check_shapes()
    except (KeyError, ValueError) as e:
        raise ModelFormatError(f"inconsistent model arrays: {e}") from e

    gold = TagSet(meta["gold_tags"])
    proj = TagSet(meta["proj_tags"])
    vocab = Vocabulary(meta["vocab"][1:], min_count=meta.get("min_count", 1))
    if vocab.tokens != meta["vocab"]:
        raise ModelFormatError("model vocabulary is malformed")
    checks = [
        (params.vocab_size, len(vocab), "vocabulary size"),
        (params.emb_dim, meta["emb_dim"], "embedding dimension"),
        (params.hidden_dim, meta["hidden_dim"], "hidden dimension"),
        (params.k_gold, gold.size, "gold tagset size"),
        (params.k_proj, proj.size, "projected tagset size"),
    ]
    if gold_tagset is not None:
        checks.append((gold.size, gold_tagset.size, "expected gold tagset size"))
    if proj_tagset is not None:
        checks.append((proj.size, proj_tagset.size, "expected projected tagset size"))
    for got, want, what in checks:
        if got != want:
            raise ModelFormatError(f"{what} mismatch: model has {got}, expected {want}")
    if gold_tagset is not None and gold != gold_tagset:
        raise ModelFormatError("model gold tagset differs from the expected one")
    if proj_tagset is not None and proj != proj_tagset:
        raise ModelFormatError("model projected tagset differs from the expected one")
    return Tagger(params, vocab, gold, proj)
