"""Export manifests: enough metadata to detect drift and reload features."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path


def hash_word_list(words) -> str:
    """Same convention as the training side: sha256 over newline-joined words."""
    h = hashlib.sha256()
    for w in words:
        h.update(w.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def load_word_list(path) -> list:
    words = [w.strip() for w in Path(path).read_text(encoding="utf-8").splitlines()]
    return [w for w in words if w]


@dataclass
class ExportManifest:
    kind: str  # vision | words | llm
    model: dict  # spec/identifier, revision or seed, tap point, preprocessing
    outputs: dict  # logical name -> written file
    dims: dict  # logical name -> tensor shape actually written
    images: list = field(default_factory=list)
    word_list_sha256: str | None = None
    tokenization: dict | None = None  # llm: word -> token ids, token -> row

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ExportManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))
