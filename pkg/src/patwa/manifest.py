"""Corpus manifest: parsing, bookkeeping, subsetting, audio fetch/validation, trainer config.

A manifest is UTF-8 JSON Lines, one clip per line::

    {"id": "clip-0001", "audio_url": "https://...", "transcript": "...",
     "lyrics": "...", "duration_s": 30.0, "sample_rate_hz": 22050}

``lyrics`` is optional. ``local_path`` and ``checksum`` are written once a clip
has been fetched. An optional first line ``{"schema_version": N}`` carries the
format version.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import os
import re
import shlex
import subprocess
import time
import urllib.error
import urllib.parse
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence, Union

from .audiofe import read_wav

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EXPECTED_SAMPLE_RATE = 22_050
EXPECTED_DURATION_S = 30.0
EXPECTED_SAMPLES = 661_500
CHECKSUM_ALGORITHM = "sha256"
CACHE_ENV = "PATWA_CACHE_DIR"
DECODER_ENV = "PATWA_DECODER"

REQUIRED_FIELDS = ("id", "audio_url", "transcript", "duration_s", "sample_rate_hz")
OPTIONAL_FIELDS = ("lyrics", "local_path", "checksum")


class ManifestError(ValueError):
    """Manifest could not be parsed; ``errors`` holds ``(row, message)`` pairs (1-based rows)."""

    def __init__(self, errors: Sequence[tuple[int, str]]):
        self.errors = list(errors)
        super().__init__("; ".join(f"row {n}: {msg}" if n else msg for n, msg in self.errors))


class FetchError(RuntimeError):
    def __init__(self, record_id: str, message: str):
        self.record_id = record_id
        super().__init__(f"{record_id}: {message}")


@dataclass(frozen=True)
class ClipRecord:
    id: str
    audio_url: str
    transcript: str
    official_lyrics: Optional[str] = None
    duration_s: float = EXPECTED_DURATION_S
    sample_rate_hz: int = EXPECTED_SAMPLE_RATE
    local_path: Optional[str] = None
    checksum: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("id must be a non-empty string")
        if not isinstance(self.transcript, str) or not self.transcript.strip():
            raise ValueError("transcript is empty")
        if not (isinstance(self.duration_s, (int, float)) and self.duration_s > 0 and math.isfinite(self.duration_s)):
            raise ValueError("duration_s must be a positive number")
        if isinstance(self.sample_rate_hz, bool) or not isinstance(self.sample_rate_hz, int) or self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be a positive integer")

    def to_json(self) -> dict:
        d = {
            "id": self.id,
            "audio_url": self.audio_url,
            "transcript": self.transcript,
        }
        if self.official_lyrics is not None:
            d["lyrics"] = self.official_lyrics
        d["duration_s"] = self.duration_s
        d["sample_rate_hz"] = self.sample_rate_hz
        if self.local_path is not None:
            d["local_path"] = self.local_path
        if self.checksum is not None:
            d["checksum"] = self.checksum
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ClipRecord":
        missing = [k for k in REQUIRED_FIELDS if k not in d]
        if missing:
            raise ValueError("missing required field(s): " + ", ".join(missing))
        unknown = set(d) - set(REQUIRED_FIELDS) - set(OPTIONAL_FIELDS)
        if unknown:
            raise ValueError("unknown field(s): " + ", ".join(sorted(unknown)))
        for k in ("id", "audio_url", "transcript"):
            if not isinstance(d[k], str):
                raise ValueError(f"{k} must be a string")
        return cls(
            id=d["id"],
            audio_url=d["audio_url"],
            transcript=d["transcript"],
            official_lyrics=d.get("lyrics"),
            duration_s=d["duration_s"],
            sample_rate_hz=d["sample_rate_hz"],
            local_path=d.get("local_path"),
            checksum=d.get("checksum"),
        )


@dataclass(frozen=True)
class Manifest:
    records: tuple[ClipRecord, ...] = ()
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise ValueError(f"duplicate id {r.id!r}")
            seen.add(r.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __add__(self, other: "Manifest") -> "Manifest":
        return Manifest(self.records + other.records, self.schema_version)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]


def total_seconds(m: Manifest) -> float:
    return math.fsum(r.duration_s for r in m.records)


def total_hours(m: Manifest) -> float:
    return total_seconds(m) / 3600.0


def format_hours(hours: float) -> str:
    return f"{hours:.2f}"


# -- parse / serialize --------------------------------------------------------

Source = Union[str, os.PathLike, bytes, IO]


def _read_source(source: Source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, (str, os.PathLike)):
        return Path(source).read_text(encoding="utf-8")
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def parse_manifest(source: Source) -> Manifest:
    """Parse a JSON Lines manifest, collecting every bad row before failing."""
    # JSON Lines separates on \n only; str.splitlines() would also break on U+2028 etc. inside strings
    lines = _read_source(source).split("\n")
    errors: list[tuple[int, str]] = []
    records: list[ClipRecord] = []
    seen: dict[str, int] = {}
    schema_version = SCHEMA_VERSION
    for n, line in enumerate(lines, 1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            errors.append((n, f"malformed JSON ({e.msg})"))
            continue
        if not isinstance(obj, dict):
            errors.append((n, "row is not a JSON object"))
            continue
        if not records and not errors and set(obj) == {"schema_version"}:
            schema_version = obj["schema_version"]
            if schema_version != SCHEMA_VERSION:
                errors.append((n, f"unsupported schema_version {schema_version}"))
            continue
        try:
            rec = ClipRecord.from_json(obj)
        except (ValueError, TypeError) as e:
            errors.append((n, str(e)))
            continue
        if rec.id in seen:
            errors.append((n, f"duplicate id {rec.id!r} (first seen on row {seen[rec.id]})"))
            continue
        seen[rec.id] = n
        records.append(rec)
    if errors:
        raise ManifestError(errors)
    if not records:
        raise ManifestError([(0, "empty manifest")])
    return Manifest(tuple(records), schema_version)


def serialize_manifest(m: Manifest) -> str:
    out = io.StringIO()
    out.write(json.dumps({"schema_version": m.schema_version}) + "\n")
    for r in m.records:
        out.write(json.dumps(r.to_json(), ensure_ascii=False) + "\n")
    return out.getvalue()


def write_manifest(m: Manifest, path) -> None:
    _atomic_write(Path(path), serialize_manifest(m).encode("utf-8"))


# -- subsets ------------------------------------------------------------------


@dataclass(frozen=True)
class SubsetSpec:
    target_hours: float
    seed: int = 0

    def __post_init__(self):
        if not self.target_hours > 0:
            raise ValueError("target_hours must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def _shuffle_key(record_id: str, seed: int) -> bytes:
    # seed goes into the hash: XOR-ing it onto hash(id) leaves nearby seeds with near-identical orders
    return hashlib.sha256(seed.to_bytes(8, "big") + record_id.encode("utf-8")).digest()


def subset_by_hours(m: Manifest, spec: SubsetSpec) -> Manifest:
    """Seeded, file-order-independent selection of up to ``spec.target_hours`` of audio.

    Records are visited in order of ``sha256(seed || id)`` and taken while they
    still fit under the target. The result keeps manifest order.
    """
    available = total_seconds(m)
    target = spec.target_hours * 3600.0
    slack = 1e-9 * max(target, 1.0)
    if target > available + slack:
        raise ValueError(
            f"target {spec.target_hours} h exceeds available {format_hours(available / 3600)} h"
        )
    order = sorted(m.records, key=lambda r: (_shuffle_key(r.id, spec.seed), r.id))
    chosen, acc = set(), 0.0
    for r in order:
        if acc + r.duration_s <= target + slack:
            chosen.add(r.id)
            acc += r.duration_s
    return Manifest(tuple(r for r in m.records if r.id in chosen), m.schema_version)


# -- fetch --------------------------------------------------------------------


def default_cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV) or Path.home() / ".cache" / "patwa")


def file_checksum(path) -> str:
    h = hashlib.new(CHECKSUM_ALGORITHM)
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return f"{CHECKSUM_ALGORITHM}:{h.hexdigest()}"


def bytes_checksum(data: bytes) -> str:
    return f"{CHECKSUM_ALGORITHM}:{hashlib.new(CHECKSUM_ALGORITHM, data).hexdigest()}"


def cache_path(r: ClipRecord, cache_dir) -> Path:
    safe = re.sub(r"[^A-Za-z0-9._-]", "_", r.id)
    if safe != r.id:
        safe += "-" + hashlib.sha1(r.id.encode("utf-8")).hexdigest()[:8]
    suffix = Path(urllib.parse.urlparse(r.audio_url).path).suffix.lower()
    if not re.fullmatch(r"\.[a-z0-9]{1,5}", suffix):
        suffix = ".bin"
    return Path(cache_dir) / f"{safe}{suffix}"


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.{id(data):x}.part")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _cached(r: ClipRecord, path: Path) -> Optional[str]:
    """Checksum of a usable cache entry, else None."""
    if not path.is_file():
        return None
    sidecar = path.with_name(path.name + ".sha256")
    expected = r.checksum or (sidecar.read_text().strip() if sidecar.is_file() else None)
    if expected is None:
        return None
    actual = file_checksum(path)
    return actual if actual == expected else None


def fetch_audio(
    r: ClipRecord,
    cache_dir,
    *,
    timeout: float = 30.0,
    retries: int = 3,
    backoff: float = 0.5,
) -> ClipRecord:
    """Download a clip into ``cache_dir`` unless a verified copy is already there.

    Transient failures (connection errors, 5xx, 408, 429) are retried
    ``retries`` times with exponential backoff. Other 4xx responses fail at once.
    """
    url = urllib.parse.urlparse(r.audio_url)
    if url.scheme not in ("http", "https"):
        raise FetchError(r.id, f"unsupported scheme {url.scheme!r}")
    if not url.netloc:
        raise FetchError(r.id, f"malformed URL {r.audio_url!r}")

    path = cache_path(r, cache_dir)
    hit = _cached(r, path)
    if hit is not None:
        log.debug("cache hit for %s", r.id)
        return replace(r, local_path=str(path), checksum=hit)

    last: Exception | None = None
    for attempt in range(retries + 1):
        if attempt:
            time.sleep(backoff * 2 ** (attempt - 1))
        try:
            with urllib.request.urlopen(r.audio_url, timeout=timeout) as resp:
                data = resp.read()
            break
        except urllib.error.HTTPError as e:
            if e.code == 404 or e.code == 410:
                raise FetchError(r.id, f"remote missing (HTTP {e.code})") from None
            if 400 <= e.code < 500 and e.code not in (408, 429):
                raise FetchError(r.id, f"HTTP {e.code}") from None
            last = e
        except (urllib.error.URLError, OSError) as e:
            last = e
        log.warning("fetch %s failed (attempt %d/%d): %s", r.id, attempt + 1, retries + 1, last)
    else:
        raise FetchError(r.id, f"network failure after {retries + 1} attempts: {last}")

    checksum = bytes_checksum(data)
    if r.checksum is not None and r.checksum != checksum:
        raise FetchError(r.id, f"checksum mismatch: expected {r.checksum}, got {checksum}")
    _atomic_write(path, data)
    _atomic_write(path.with_name(path.name + ".sha256"), (checksum + "\n").encode())
    return replace(r, local_path=str(path), checksum=checksum)


@dataclass(frozen=True)
class FetchOutcome:
    record: ClipRecord
    error: Optional[str] = None


def fetch_all(records: Iterable[ClipRecord], cache_dir, jobs: int = 4, **kwargs) -> list[FetchOutcome]:
    """Fetch concurrently; outcomes come back in input order."""

    def one(r: ClipRecord) -> FetchOutcome:
        try:
            return FetchOutcome(fetch_audio(r, cache_dir, **kwargs))
        except FetchError as e:
            return FetchOutcome(r, str(e))

    records = list(records)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(one, records))


# -- decode / validate --------------------------------------------------------


def decode_to_wav(src, dst, template: Optional[str] = None) -> Path:
    """Run an external decoder, e.g. ``ffmpeg -nostdin -loglevel error -y -i {src} -ac 1 {dst}``."""
    template = template or os.environ.get(DECODER_ENV)
    if not template:
        raise ValueError(f"no decoder configured for {src}; set {DECODER_ENV} or pass a template")
    argv = [tok.format(src=str(src), dst=str(dst)) for tok in shlex.split(template)]
    proc = subprocess.run(argv, capture_output=True, text=True)
    if proc.returncode != 0:
        raise ValueError(f"decoder failed on {src}: {proc.stderr.strip()[:500]}")
    return Path(dst)


@dataclass(frozen=True)
class ValidationReport:
    id: str
    samples: int
    sample_rate_hz: int
    duration_s: float
    expected_samples: int
    expected_rate: int
    passed: bool
    problems: tuple[str, ...] = ()

    def to_json(self) -> dict:
        d = asdict(self)
        d["problems"] = list(self.problems)
        return d


def validate_audio(
    r: ClipRecord,
    expected_rate: int = EXPECTED_SAMPLE_RATE,
    expected_samples: int = EXPECTED_SAMPLES,
) -> ValidationReport:
    """Decode ``r.local_path`` (WAV) and compare with the corpus convention of 30 s at 22.05 kHz."""
    if r.local_path is None:
        raise ValueError(f"{r.id}: no local audio (fetch first)")
    buf = read_wav(r.local_path)
    if len(buf) == 0:
        raise ValueError(f"{r.id}: zero-length audio")
    problems = []
    if buf.sample_rate_hz != expected_rate:
        problems.append(f"sample rate {buf.sample_rate_hz} Hz, expected {expected_rate} Hz")
    if len(buf) != expected_samples:
        problems.append(f"{len(buf)} samples, expected {expected_samples}")
    if buf.sample_rate_hz != r.sample_rate_hz:
        problems.append(f"manifest declares {r.sample_rate_hz} Hz")
    if abs(buf.duration_s - r.duration_s) > 1.0 / buf.sample_rate_hz:
        problems.append(f"manifest declares {r.duration_s} s, file holds {buf.duration_s:.6f} s")
    return ValidationReport(
        id=r.id,
        samples=len(buf),
        sample_rate_hz=buf.sample_rate_hz,
        duration_s=buf.duration_s,
        expected_samples=expected_samples,
        expected_rate=expected_rate,
        passed=not problems,
        problems=tuple(problems),
    )


# -- training config ----------------------------------------------------------


@dataclass(frozen=True)
class TrainingConfig:
    optimizer_name: str = "AdamW"
    initial_lr: float = 1e-5
    warmup_steps: int = 500
    total_steps: int = 4000
    scheduler: str = "linear"

    def __post_init__(self):
        if not self.initial_lr > 0:
            raise ValueError("initial_lr must be positive")
        if self.warmup_steps < 0 or self.total_steps <= 0:
            raise ValueError("step counts must be non-negative (total positive)")
        if self.warmup_steps > self.total_steps:
            raise ValueError(f"warmup_steps {self.warmup_steps} exceeds total_steps {self.total_steps}")


_TOML_ESCAPES = {'"': '\\"', "\\": "\\\\", "\b": "\\b", "\t": "\\t", "\n": "\\n", "\f": "\\f", "\r": "\\r"}


def _toml_value(v) -> str:
    if isinstance(v, str):
        body = "".join(
            _TOML_ESCAPES.get(ch) or (f"\\u{ord(ch):04x}" if ord(ch) < 0x20 or ord(ch) == 0x7F else ch) for ch in v
        )
        return f'"{body}"'
    return repr(v)


def emit_training_config(c: TrainingConfig, out) -> Path:
    body = "".join(f"{f.name} = {_toml_value(getattr(c, f.name))}\n" for f in fields(c))
    out = Path(out)
    _atomic_write(out, body.encode("utf-8"))
    return out


def load_training_config(path) -> TrainingConfig:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    names = {f.name for f in fields(TrainingConfig)}
    if set(data) != names:
        raise ValueError(f"training config keys must be exactly {sorted(names)}")
    return TrainingConfig(**data)
