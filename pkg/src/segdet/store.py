"""Versioned sectioned-text container used by all model files.

Layout: a magic first line, then `[section]` headers with `key = value` lines.
Values are plain text; helpers below encode float arrays either as decimal
floats (space separated, repr round-trip) or as base64 little-endian float64
blobs for large parameter tensors.
"""

from __future__ import annotations

import base64

import numpy as np

from .errors import ModelVersionMismatchError, ParseError


def write_sections(path, magic: str, sections: list[tuple[str, list[tuple[str, str]]]]) -> None:
    lines = [magic]
    for name, entries in sections:
        lines.append(f"[{name}]")
        for key, value in entries:
            lines.append(f"{key} = {value}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sections(path, magic: str) -> list[tuple[str, dict[str, str]]]:
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    if not raw or raw[0].strip() != magic:
        found = raw[0].strip() if raw else "<empty file>"
        raise ModelVersionMismatchError(
            f"{path}: expected magic '{magic}', found '{found}'"
        )
    sections: list[tuple[str, dict[str, str]]] = []
    current: dict[str, str] | None = None
    for lineno, line in enumerate(raw[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = {}
            sections.append((line[1:-1], current))
            continue
        if current is None or "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected '[section]' or 'key = value'")
        key, _, value = line.partition("=")
        current[key.strip()] = value.strip()
    return sections


def floats_to_text(values) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(values, dtype=np.float64).ravel())


def floats_from_text(text: str) -> np.ndarray:
    if not text:
        return np.zeros(0, dtype=np.float64)
    return np.array([float(tok) for tok in text.split()], dtype=np.float64)


def array_to_blob(arr: np.ndarray) -> str:
    a = np.ascontiguousarray(arr, dtype="<f8")
    shape = ",".join(str(d) for d in a.shape)
    return shape + " " + base64.b64encode(a.tobytes()).decode("ascii")


def blob_to_array(text: str) -> np.ndarray:
    shape_txt, _, payload = text.partition(" ")
    shape = tuple(int(d) for d in shape_txt.split(",") if d)
    data = np.frombuffer(base64.b64decode(payload), dtype="<f8")
    return data.reshape(shape).astype(np.float64)
