"""Batch feature preparation for a manifest: locate audio, decode, extract, write ``.lmf`` files."""

from __future__ import annotations

import re
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .audiofe import features_for_clip, read_wav, write_features
from .manifest import ClipRecord, Manifest, cache_path, decode_to_wav


@dataclass(frozen=True)
class PrepResult:
    id: str
    path: Optional[str] = None
    frames: int = 0
    error: Optional[str] = None


def feature_path(r: ClipRecord, out_dir) -> Path:
    return Path(out_dir) / (re.sub(r"[^A-Za-z0-9._-]", "_", r.id) + ".lmf")


def locate_audio(r: ClipRecord, cache_dir=None) -> Path:
    if r.local_path:
        return Path(r.local_path)
    if cache_dir is not None:
        p = cache_path(r, cache_dir)
        if p.is_file():
            return p
    raise FileNotFoundError(f"{r.id}: no local audio; run fetch first")


def prepare_clip(r: ClipRecord, out_dir, cache_dir=None, decoder: Optional[str] = None) -> PrepResult:
    try:
        src = locate_audio(r, cache_dir)
        if src.suffix.lower() == ".wav":
            buf = read_wav(src)
        else:
            with tempfile.TemporaryDirectory() as tmp:
                buf = read_wav(decode_to_wav(src, Path(tmp) / "clip.wav", decoder))
        feat = features_for_clip(buf)
        dst = feature_path(r, out_dir)
        write_features(feat, dst)
        return PrepResult(r.id, str(dst), feat.values.shape[0])
    except (OSError, ValueError) as e:
        return PrepResult(r.id, error=str(e))


def prepare_manifest(m: Manifest, out_dir, cache_dir=None, decoder: Optional[str] = None, jobs: int = 1) -> list[PrepResult]:
    """Extract features for every clip; results follow manifest order whatever ``jobs`` is."""
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    if jobs <= 1:
        return [prepare_clip(r, out_dir, cache_dir, decoder) for r in m.records]
    n = len(m.records)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(prepare_clip, m.records, [out_dir] * n, [cache_dir] * n, [decoder] * n))
