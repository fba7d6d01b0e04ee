"""The three export operations: vision patch grids, word features, LLM rows."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ImageDecodeError
from .manifest import ExportManifest, hash_word_list
from .models import IMAGE_MEAN, IMAGE_STD, LlmEmbeddings, VisionTextEncoder
from .tensorio import read_tensors, write_tensors


def load_pixels(image_path, image_size: int) -> np.ndarray:
    """Decode, resize and normalize one image to (3, S, S) float32."""
    try:
        with Image.open(image_path) as img:
            rgb = img.convert("RGB").resize((image_size, image_size), Image.BICUBIC)
    except (OSError, ValueError) as exc:
        raise ImageDecodeError(f"cannot decode {image_path}: {exc}") from exc
    arr = np.asarray(rgb, dtype=np.float32) / 255.0
    arr = (arr - np.array(IMAGE_MEAN, np.float32)) / np.array(IMAGE_STD, np.float32)
    return arr.transpose(2, 0, 1)


def _verify_written_dims(tensor_path, manifest: ExportManifest) -> None:
    written = read_tensors(tensor_path)
    for name, shape in manifest.dims.items():
        if list(written[name].shape) != list(shape):
            raise RuntimeError(f"{name}: manifest dims {shape} != written {written[name].shape}")


def export_vision_features(image_paths, encoder: VisionTextEncoder, out_dir) -> ExportManifest:
    """One named patch-grid entry per image: (grid, grid, projection_dim)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    side = encoder.grid_side
    tensors = {}
    for path in image_paths:
        pixels = load_pixels(path, encoder.image_size)[None]
        feats = encoder.patch_features(pixels)[0]
        tensors[f"patch_grid/{Path(path).stem}"] = feats.reshape(side, side, -1)
    tensor_path = out / "vision_features.sea"
    write_tensors(tensor_path, tensors)
    manifest = ExportManifest(
        kind="vision",
        model=encoder.spec,
        outputs={"tensors": str(tensor_path)},
        dims={name: list(t.shape) for name, t in tensors.items()},
        images=[str(p) for p in image_paths],
    )
    _verify_written_dims(tensor_path, manifest)
    manifest.save(out / "vision_manifest.json")
    return manifest


def export_word_features(words, encoder: VisionTextEncoder, out_dir) -> ExportManifest:
    """(q, projection_dim) text features for the labeling side."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    features = encoder.word_features(words)
    tensor_path = out / "word_features.sea"
    write_tensors(tensor_path, {"word_features": features})
    manifest = ExportManifest(
        kind="words",
        model=encoder.spec,
        outputs={"tensors": str(tensor_path)},
        dims={"word_features": list(features.shape)},
        word_list_sha256=hash_word_list(words),
    )
    _verify_written_dims(tensor_path, manifest)
    manifest.save(out / "word_manifest.json")
    return manifest


def export_llm_embedding_rows(words, llm: LlmEmbeddings, out_dir) -> ExportManifest:
    """Embedding rows for every token of every word, plus the id maps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, word_ids, token_row = llm.rows_for(words)
    tensor_path = out / "llm_embeddings.sea"
    write_tensors(tensor_path, {"token_embeddings": rows})
    manifest = ExportManifest(
        kind="llm",
        model=llm.spec,
        outputs={"tensors": str(tensor_path)},
        dims={"token_embeddings": list(rows.shape)},
        word_list_sha256=hash_word_list(words),
        tokenization={"word_token_ids": word_ids, "token_row": token_row},
    )
    _verify_written_dims(tensor_path, manifest)
    manifest.save(out / "llm_manifest.json")
    return manifest
