"""Model resolution for the export commands.

Two kinds of model spec:

- ``seeded-clip`` / ``seeded-llm``: real architectures (transformers CLIP
  towers, a BPE tokenizer trained on the word list) instantiated locally with
  seed-determined weights.  No network, fully reproducible; useful wherever a
  hub checkpoint is unavailable and for tests.
- anything else is treated as a Hugging Face model id and loaded with
  ``from_pretrained`` (requires a local cache or network).

The vision tap is the post-layernorm patch tokens pushed through the model's
visual projection, so patch and word features share the projection space in
which cosine similarity is meaningful.  The tap name lands in the manifest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ModelLoadError, TokenizerMismatchError

SEEDED_CLIP = "seeded-clip"
SEEDED_LLM = "seeded-llm"

VISION_TAP = "post_layernorm_patches@visual_projection"
TEXT_TAP = "masked_mean@text_projection"

# standard CLIP preprocessing constants, recorded in the manifest
IMAGE_MEAN = (0.48145466, 0.4578275, 0.40821073)
IMAGE_STD = (0.26862954, 0.26130258, 0.27577711)


def train_bpe_tokenizer(words, vocab_budget: int = 128):
    """Deterministic BPE over the word list; budget caps whole-word merges
    so multi-token words exist and the mean-of-rows path gets exercised."""
    from tokenizers import Tokenizer, models, pre_tokenizers, trainers

    tok = Tokenizer(models.BPE(unk_token="<unk>"))
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    trainer = trainers.BpeTrainer(
        vocab_size=vocab_budget,
        special_tokens=["<pad>", "<unk>", "<bos>", "<eos>"],
        show_progress=False,
    )
    tok.train_from_iterator(sorted(words), trainer)
    return tok


@dataclass
class VisionTextEncoder:
    """Paired vision/text towers sharing one projection space."""

    model: object  # transformers CLIPModel
    tokenize: object  # callable: word -> list of token ids
    pad_id: int
    spec: dict  # manifest fragment: identifiers, seed/revision, taps

    @property
    def grid_side(self) -> int:
        cfg = self.model.config.vision_config
        return cfg.image_size // cfg.patch_size

    @property
    def image_size(self) -> int:
        return self.model.config.vision_config.image_size

    @property
    def projection_dim(self) -> int:
        return self.model.config.projection_dim

    @torch.no_grad()
    def patch_features(self, pixel_values: np.ndarray) -> np.ndarray:
        """(B, 3, S, S) pixels -> (B, grid*grid, projection_dim) features."""
        out = self.model.vision_model(pixel_values=torch.from_numpy(pixel_values).float())
        tokens = out.last_hidden_state[:, 1:, :]  # drop the CLS slot
        tokens = self.model.vision_model.post_layernorm(tokens)
        projected = self.model.visual_projection(tokens)
        return projected.numpy().astype(np.float32)

    @torch.no_grad()
    def word_features(self, words) -> np.ndarray:
        """(q, projection_dim) pooled text features, one row per word."""
        ids = [self.tokenize(w) for w in words]
        longest = max(len(i) for i in ids)
        batch = np.full((len(ids), longest), self.pad_id, dtype=np.int64)
        mask = np.zeros((len(ids), longest), dtype=np.int64)
        for row, seq in enumerate(ids):
            batch[row, : len(seq)] = seq
            mask[row, : len(seq)] = 1
        out = self.model.text_model(
            input_ids=torch.from_numpy(batch), attention_mask=torch.from_numpy(mask)
        )
        hidden = out.last_hidden_state
        weights = torch.from_numpy(mask).unsqueeze(-1).float()
        pooled = (hidden * weights).sum(dim=1) / weights.sum(dim=1)
        return self.model.text_projection(pooled).numpy().astype(np.float32)


def _seeded_clip(words, seed: int, projection_dim: int, image_size: int, patch_size: int):
    from transformers import CLIPConfig, CLIPModel, CLIPTextConfig, CLIPVisionConfig

    tokenizer = train_bpe_tokenizer(words)
    vocab = tokenizer.get_vocab_size()
    pad_id = tokenizer.token_to_id("<pad>")
    config = CLIPConfig(
        text_config=CLIPTextConfig(
            vocab_size=vocab, hidden_size=48, num_hidden_layers=2, num_attention_heads=4,
            intermediate_size=96, max_position_embeddings=64,
            bos_token_id=tokenizer.token_to_id("<bos>"),
            eos_token_id=tokenizer.token_to_id("<eos>"),
            pad_token_id=pad_id,
        ).to_dict(),
        vision_config=CLIPVisionConfig(
            hidden_size=64, num_hidden_layers=2, num_attention_heads=4,
            intermediate_size=128, image_size=image_size, patch_size=patch_size,
        ).to_dict(),
        projection_dim=projection_dim,
    )
    torch.manual_seed(seed)
    model = CLIPModel(config).eval()
    spec = {
        "id": SEEDED_CLIP,
        "seed": seed,
        "weights": "seed-initialized (no pretrained checkpoint available)",
        "tokenizer": f"bpe({vocab} pieces, trained on the word list)",
        "vision_tap": VISION_TAP,
        "text_tap": TEXT_TAP,
        "preprocess": {"resize": image_size, "mean": IMAGE_MEAN, "std": IMAGE_STD},
    }
    return VisionTextEncoder(
        model=model,
        tokenize=lambda w: tokenizer.encode(w).ids,
        pad_id=pad_id,
        spec=spec,
    )


def _hub_clip(model_id: str, revision):
    from transformers import AutoTokenizer, CLIPModel

    try:
        model = CLIPModel.from_pretrained(model_id, revision=revision).eval()
        tokenizer = AutoTokenizer.from_pretrained(model_id, revision=revision)
    except Exception as exc:
        raise ModelLoadError(f"cannot load {model_id!r}: {exc}") from exc
    spec = {
        "id": model_id,
        "revision": revision or "default",
        "vision_tap": VISION_TAP,
        "text_tap": TEXT_TAP,
        "preprocess": {
            "resize": model.config.vision_config.image_size,
            "mean": IMAGE_MEAN,
            "std": IMAGE_STD,
        },
    }
    return VisionTextEncoder(
        model=model,
        tokenize=lambda w: tokenizer(w, add_special_tokens=True)["input_ids"],
        pad_id=tokenizer.pad_token_id or 0,
        spec=spec,
    )


def load_vision_text_encoder(
    model_id: str,
    words,
    seed: int = 0,
    revision=None,
    projection_dim: int = 32,
    image_size: int = 64,
    patch_size: int = 16,
) -> VisionTextEncoder:
    if model_id == SEEDED_CLIP:
        if not words:
            raise ModelLoadError("seeded-clip needs the word list (its tokenizer is trained on it)")
        return _seeded_clip(words, seed, projection_dim, image_size, patch_size)
    return _hub_clip(model_id, revision)


@dataclass
class LlmEmbeddings:
    """An LLM's input-embedding rows plus the word -> token-id mapping."""

    tokenize: object
    table: np.ndarray  # (vocab, d_llm) float32
    spec: dict

    def rows_for(self, words):
        """(token_embeddings, word->ids map, token->row map) for a word list."""
        word_ids = {}
        used = []
        seen = {}
        for w in words:
            ids = self.tokenize(w)
            for t in ids:
                if t < 0 or t >= self.table.shape[0]:
                    raise TokenizerMismatchError(
                        f"token id {t} for {w!r} outside the embedding table "
                        f"({self.table.shape[0]} rows)"
                    )
                if t not in seen:
                    seen[t] = len(used)
                    used.append(t)
            word_ids[w] = [int(t) for t in ids]
        rows = self.table[used] if used else np.zeros((0, self.table.shape[1]), np.float32)
        token_row = {str(t): i for t, i in seen.items()}
        return rows.astype(np.float32), word_ids, token_row


def load_llm_embeddings(model_id: str, words, seed: int = 0, revision=None, d_llm: int = 64) -> LlmEmbeddings:
    if model_id == SEEDED_LLM:
        if not words:
            raise ModelLoadError("seeded-llm needs the word list (its tokenizer is trained on it)")
        tokenizer = train_bpe_tokenizer(words)
        torch.manual_seed(seed)
        table = torch.nn.Embedding(tokenizer.get_vocab_size(), d_llm)
        return LlmEmbeddings(
            tokenize=lambda w: tokenizer.encode(w).ids,
            table=table.weight.detach().numpy().astype(np.float32),
            spec={
                "id": SEEDED_LLM,
                "seed": seed,
                "weights": "seed-initialized (no pretrained checkpoint available)",
                "tokenizer": f"bpe({tokenizer.get_vocab_size()} pieces, trained on the word list)",
                "d_llm": d_llm,
            },
        )
    from transformers import AutoModel, AutoTokenizer

    try:
        model = AutoModel.from_pretrained(model_id, revision=revision).eval()
        tokenizer = AutoTokenizer.from_pretrained(model_id, revision=revision)
    except Exception as exc:
        raise ModelLoadError(f"cannot load {model_id!r}: {exc}") from exc
    table = model.get_input_embeddings().weight.detach().numpy().astype(np.float32)
    return LlmEmbeddings(
        tokenize=lambda w: tokenizer(w, add_special_tokens=False)["input_ids"],
        table=table,
        spec={"id": model_id, "revision": revision or "default", "d_llm": table.shape[1]},
    )
