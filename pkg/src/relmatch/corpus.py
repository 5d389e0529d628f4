"""Synthetic paired corpus with location-flipped hard negatives, and file I/O.

Layout of a generated directory::

    corpus.json        generator settings and PRNG description
    manifest.jsonl     one object per pair
    tensors/           <id>_img.rmt, <id>_txt.rmt
    prompts/           prompts.jsonl, class_<c>_v<v>.rmt, class_<c>_name.rmt

Random numbers come from per-stream xoshiro256++ generators seeded through
splitmix64, advanced in lockstep with numpy so that generation is fast and
bit-reproducible on any platform.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractError, FormatError

MAGIC = b"RMT1"
LOCATIONS = ("left", "right")
NO_FINDING = 0

_M64 = (1 << 64) - 1


# -- PRNG -------------------------------------------------------------------

def splitmix64(x: int) -> tuple[int, int]:
    """One splitmix64 step: returns (next_state, output)."""
    x = (x + 0x9E3779B97F4A7C15) & _M64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return x, z ^ (z >> 31)


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


class Xoshiro256pp:
    """xoshiro256++ over a vector of independent streams.

    Stream ``i`` is seeded by four splitmix64 outputs starting from
    ``seed ^ (stream_id * golden)``; every call advances all streams once.
    """

    def __init__(self, seed: int, stream_ids: Sequence[int]):
        states = []
        for sid in stream_ids:
            x = (seed ^ ((int(sid) * 0x9E3779B97F4A7C15) & _M64)) & _M64
            words = []
            for _ in range(4):
                x, out = splitmix64(x)
                words.append(out)
            states.append(words)
        self.s = np.array(states, dtype=np.uint64).reshape(len(stream_ids), 4).T.copy()

    def next_u64(self) -> np.ndarray:
        s = self.s
        with np.errstate(over="ignore"):
            result = _rotl(s[0] + s[3], 23) + s[0]
        t = s[1] << np.uint64(17)
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> np.ndarray:
        """Doubles in [0, 1) built from the top 53 bits."""
        return (self.next_u64() >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

    def integers(self, n) -> np.ndarray:
        return np.minimum((self.uniform() * n).astype(np.int64), np.asarray(n) - 1)

    def normal(self, count: int) -> np.ndarray:
        """``count`` standard normals per stream (Box-Muller), shape (streams, count)."""
        out = np.empty((self.s.shape[1], count))
        for i in range(0, count, 2):
            u1 = self.uniform()
            u2 = self.uniform()
            r = np.sqrt(-2.0 * np.log1p(-u1))
            out[:, i] = r * np.cos(2 * math.pi * u2)
            if i + 1 < count:
                out[:, i + 1] = r * np.sin(2 * math.pi * u2)
        return out


# -- tensor files -----------------------------------------------------------

def write_tensor(m, path) -> None:
    """Write ``m`` as RMT1: magic, u32 rank, u32 dims, float32 payload (all LE)."""
    a = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("refusing to write non-finite tensor")
    header = MAGIC + struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    Path(path).write_bytes(header + a.astype("<f4").tobytes(order="C"))


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}", 0)
    if len(buf) < 8:
        raise FormatError("truncated rank field", len(buf))
    (rank,) = struct.unpack_from("<I", buf, 4)
    end = 8 + 4 * rank
    if len(buf) < end:
        raise FormatError("truncated dims", len(buf))
    dims = struct.unpack_from(f"<{rank}I", buf, 8)
    need = end + 4 * int(np.prod(dims, dtype=np.int64))
    if len(buf) < need:
        raise FormatError(f"truncated payload: expected {need} bytes, have {len(buf)}", len(buf))
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} trailing bytes", need)
    data = np.frombuffer(buf, dtype="<f4", offset=end, count=need // 4 - end // 4)
    return data.astype(np.float64).reshape(dims)


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


# -- corpus description -----------------------------------------------------

@dataclass
class CorpusSpec:
    z: int = 6
    M: int = 16
    N: int = 8
    d_in: int = 32
    n_train: int = 2000
    n_val: int = 200
    n_test: int = 1000
    noise_sigma: float = 0.2
    hard_negative: bool = False
    seed: int = 0
    n_signal: int = 1
    background: float = 1.0
    n_prompts: int = 5
    filler: str = "random"

    def __post_init__(self):
        if self.filler not in ("random", "shared"):
            raise ConfigError("filler must be 'random' or 'shared'")
        for name in ("z", "M", "N", "d_in", "n_train", "n_val", "n_test", "n_signal", "n_prompts"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.z < 2:
            raise ConfigError("z must be >= 2 (class 0 is reserved for no-finding)")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.hard_negative and (self.z - 1) % 2:
            raise ConfigError("hard_negative needs an even number of finding classes (z - 1)")
        if self.N < self.n_keywords:
            raise ConfigError(f"N={self.N} cannot hold {self.n_keywords} keyword tokens")
        if self.n_signal > self.M // 2 and self.M > 1:
            raise ConfigError("n_signal must fit inside half of the patch grid")
        if self.d_in < self.n_latents:
            raise ConfigError(f"d_in={self.d_in} too small for {self.n_latents} orthonormal latents")

    @property
    def n_keywords(self) -> int:
        return 2 if self.hard_negative else 1

    @property
    def n_diseases(self) -> int:
        """Distinct finding latents (twins share one)."""
        return (self.z - 1) // 2 if self.hard_negative else self.z - 1

    @property
    def n_latents(self) -> int:
        # one per disease, no-finding phrase, two locations, filler word
        return self.n_diseases + 1 + 2 + 1

    @property
    def grid(self) -> tuple[int, int]:
        h = max(i for i in range(1, int(math.isqrt(self.M)) + 1) if self.M % i == 0)
        return h, self.M // h

    def class_disease(self, c: int) -> int:
        """Latent index carried by class ``c`` (0 is the no-finding phrase)."""
        if c == NO_FINDING:
            return 0
        return 1 + ((c - 1) // 2 if self.hard_negative else c - 1)

    def class_location(self, c: int) -> int | None:
        if c == NO_FINDING or not self.hard_negative:
            return None
        return (c - 1) % 2

    def twin(self, c: int) -> int:
        if not self.hard_negative or c == NO_FINDING:
            raise ContractError(f"class {c} has no location twin")
        return c + 1 if (c - 1) % 2 == 0 else c - 1

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusSpec":
        return cls(**d)


@dataclass
class TokenPair:
    id: str
    image_tokens: np.ndarray
    text_tokens: np.ndarray
    label: np.ndarray
    signal_patches: list[int] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def _latents(spec: CorpusSpec) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal semantic latents (rows) and unit background vectors per patch."""
    rng = Xoshiro256pp(spec.seed, [0xC0FFEE])
    n_sem = spec.n_latents
    g = rng.normal(spec.d_in * (n_sem + spec.M))[0].reshape(n_sem + spec.M, spec.d_in)
    basis: list[np.ndarray] = []
    for row in g[:n_sem]:
        v = row.copy()
        for b in basis:
            v -= (v @ b) * b
        basis.append(v / np.linalg.norm(v))
    sem = np.array(basis)
    bg = g[n_sem:] - (g[n_sem:] @ sem.T) @ sem
    bg /= np.linalg.norm(bg, axis=1, keepdims=True)
    return sem, bg


def _half(spec: CorpusSpec, loc: int) -> list[int]:
    h, w = spec.grid
    if w < 2:
        return list(range(spec.M))
    cols = range(w // 2) if loc == 0 else range(w - w // 2, w)
    return [r * w + c for r in range(h) for c in cols]


def _split_classes(spec: CorpusSpec, split: str, n: int, rng: Xoshiro256pp) -> np.ndarray:
    if split == "test":
        # balanced over finding classes, as in the 5x200 protocol
        return 1 + np.arange(n) % (spec.z - 1)
    return rng.integers(spec.z)


def _filler_words(spec: CorpusSpec, rng: Xoshiro256pp, sem, n: int) -> np.ndarray:
    """(n, d_in, N) non-keyword words: one shared latent, or fresh unit vectors per pair."""
    if spec.filler == "shared":
        filler = sem[spec.n_diseases + 3]
        return np.broadcast_to(filler[None, :, None], (n, spec.d_in, spec.N))
    w = rng.normal(spec.d_in * spec.N).reshape(n, spec.N, spec.d_in)
    w /= np.linalg.norm(w, axis=-1, keepdims=True)
    return np.swapaxes(w, 1, 2)


def _make_split(spec: CorpusSpec, split: str, n: int, offset: int, sem, bg):
    rng = Xoshiro256pp(spec.seed, range(offset, offset + n))
    classes = _split_classes(spec, split, n, rng)
    loc_draw = rng.integers(2)
    kw_draw = [rng.uniform() for _ in range(spec.n_keywords)]
    sig_draw = [rng.uniform() for _ in range(spec.n_signal)]
    img_noise = rng.normal(spec.d_in * spec.M).reshape(n, spec.d_in, spec.M)
    txt_noise = rng.normal(spec.d_in * spec.N).reshape(n, spec.d_in, spec.N)
    fill = _filler_words(spec, rng, sem, n)
    loc_base = spec.n_diseases + 1

    out = []
    for i in range(n):
        c = int(classes[i])
        cl = spec.class_location(c)
        loc = int(loc_draw[i]) if cl is None else cl
        disease = sem[spec.class_disease(c)]

        eligible = _half(spec, loc)
        patches = []
        for s in range(spec.n_signal):
            j = min(int(sig_draw[s][i] * len(eligible)), len(eligible) - 1)
            patches.append(eligible.pop(j))
        if c == NO_FINDING:
            patches = []
        patches.sort()

        img = spec.background * bg.T.copy()
        for j in patches:
            img[:, j] = disease + (sem[loc_base + loc] if spec.hard_negative else 0.0)
        img += spec.noise_sigma * img_noise[i]

        slots = list(range(spec.N))
        kw = []
        for s in range(spec.n_keywords):
            j = min(int(kw_draw[s][i] * len(slots)), len(slots) - 1)
            kw.append(slots.pop(j))
        txt = fill[i].copy()
        txt[:, kw[0]] = disease
        if spec.hard_negative:
            txt[:, kw[1]] = sem[loc_base + loc]
        txt = txt + spec.noise_sigma * txt_noise[i]

        label = np.zeros(spec.z)
        label[c] = 1.0
        out.append(TokenPair(
            id=f"{split}-{i:05d}",
            image_tokens=img,
            text_tokens=txt,
            label=label,
            signal_patches=patches,
            meta={"class": c, "location": LOCATIONS[loc], "keyword_indices": kw},
        ))
    return out


def _prompt_texts(spec: CorpusSpec, c: int, sem, rng_seed_stream: int):
    """Keyword-only class name tokens plus ``n_prompts`` padded caption variants."""
    loc_base = spec.n_diseases + 1
    words = [sem[spec.class_disease(c)]]
    cl = spec.class_location(c)
    if cl is not None:
        words.append(sem[loc_base + cl])
    name = np.stack(words, axis=1)
    rng = Xoshiro256pp(spec.seed, [rng_seed_stream + v for v in range(spec.n_prompts)])
    noise = rng.normal(spec.d_in * spec.N).reshape(spec.n_prompts, spec.d_in, spec.N)
    fill = _filler_words(spec, rng, sem, spec.n_prompts)
    variants = []
    for v in range(spec.n_prompts):
        txt = fill[v].copy()
        for w, word in enumerate(words):
            txt[:, (v + w) % spec.N] = word
        variants.append(txt + spec.noise_sigma * noise[v])
    return name, variants


def prompt_classes(spec: CorpusSpec) -> list[int]:
    return list(range(spec.z))


def generate_corpus(spec: CorpusSpec, out_dir) -> Path:
    """Write a complete corpus directory; output depends only on ``spec``."""
    out = Path(out_dir)
    try:
        (out / "tensors").mkdir(parents=True, exist_ok=True)
        (out / "prompts").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create corpus directory {out}: {e}") from e
    sem, bg = _latents(spec)

    lines = []
    offset = 1
    for split, n in (("train", spec.n_train), ("val", spec.n_val), ("test", spec.n_test)):
        for pair in _make_split(spec, split, n, offset, sem, bg):
            img_file = f"tensors/{pair.id}_img.rmt"
            txt_file = f"tensors/{pair.id}_txt.rmt"
            write_tensor(pair.image_tokens, out / img_file)
            write_tensor(pair.text_tokens, out / txt_file)
            lines.append({
                "id": pair.id,
                "split": split,
                "label": [int(x) for x in pair.label],
                "image_file": img_file,
                "text_file": txt_file,
                "signal_patches": pair.signal_patches,
                "meta": pair.meta,
            })
        offset += n
    with open(out / "manifest.jsonl", "w") as f:
        for entry in lines:
            f.write(json.dumps(entry, sort_keys=True) + "\n")

    prompts = []
    for c in prompt_classes(spec):
        name, variants = _prompt_texts(spec, c, sem, 1 << 40 | c << 8)
        name_file = f"prompts/class_{c}_name.rmt"
        write_tensor(name, out / name_file)
        for v, txt in enumerate(variants):
            f_ = f"prompts/class_{c}_v{v}.rmt"
            write_tensor(txt, out / f_)
            prompts.append({"class": c, "variant": v, "text_file": f_, "name_file": name_file})
    with open(out / "prompts" / "prompts.jsonl", "w") as f:
        for entry in prompts:
            f.write(json.dumps(entry, sort_keys=True) + "\n")

    meta = {
        "spec": asdict(spec),
        "grid": list(spec.grid),
        "prng": "xoshiro256++ per stream, state seeded by 4 splitmix64 outputs of seed ^ (stream * 0x9E3779B97F4A7C15)",
        "latents": "Gram-Schmidt orthonormalised: [no-finding, diseases..., left, right, filler]",
        "tensor_format": "RMT1 little-endian float32",
    }
    (out / "corpus.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


# -- reading ----------------------------------------------------------------

class Manifest:
    """Manifest entries of one corpus directory, optionally restricted to a split."""

    def __init__(self, root, entries: list[dict]):
        self.root = Path(root)
        self.entries = entries
        self._cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    @classmethod
    def load(cls, root, split: str | None = None) -> "Manifest":
        root = Path(root)
        with open(root / "manifest.jsonl") as f:
            entries = [json.loads(line) for line in f if line.strip()]
        m = cls(root, entries)
        return m.split(split) if split else m

    def split(self, name: str) -> "Manifest":
        return Manifest(self.root, [e for e in self.entries if e["split"] == name])

    def spec(self) -> CorpusSpec:
        return CorpusSpec.from_dict(json.loads((self.root / "corpus.json").read_text())["spec"])

    def __len__(self) -> int:
        return len(self.entries)

    def index_of(self, pair_id: str) -> int:
        for i, e in enumerate(self.entries):
            if e["id"] == pair_id:
                return i
        raise KeyError(f"unknown pair id {pair_id!r}")

    def _tensors(self, e: dict) -> tuple[np.ndarray, np.ndarray]:
        if e["id"] not in self._cache:
            try:
                img = read_tensor(self.root / e["image_file"])
                txt = read_tensor(self.root / e["text_file"])
            except FileNotFoundError as err:
                raise FileNotFoundError(f"missing tensor file for pair {e['id']}: {err.filename}") from None
            self._cache[e["id"]] = (img, txt)
        return self._cache[e["id"]]

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stacked (images, texts, labels) for every entry."""
        pairs = load_batch(self, range(len(self)))
        if not pairs:
            raise ContractError("empty manifest")
        return (np.stack([p.image_tokens for p in pairs]),
                np.stack([p.text_tokens for p in pairs]),
                np.stack([p.label for p in pairs]))

    def classes(self) -> np.ndarray:
        return np.array([e["meta"]["class"] for e in self.entries])


def load_batch(manifest: Manifest, indices: Sequence[int]) -> list[TokenPair]:
    out = []
    for i in indices:
        if not 0 <= i < len(manifest):
            raise IndexError(f"index {i} outside manifest of {len(manifest)} pairs")
        e = manifest.entries[i]
        img, txt = manifest._tensors(e)
        out.append(TokenPair(e["id"], img, txt, np.asarray(e["label"], dtype=np.float64),
                             list(e["signal_patches"]), dict(e["meta"])))
    return out


@dataclass
class PromptSet:
    """Caption variants per class: ``texts[c]`` has shape (n_prompts, d_in, N)."""

    classes: list[int]
    texts: dict[int, np.ndarray]
    names: dict[int, np.ndarray]


def load_prompts(root) -> PromptSet:
    root = Path(root)
    with open(root / "prompts" / "prompts.jsonl") as f:
        entries = [json.loads(line) for line in f if line.strip()]
    texts: dict[int, list] = {}
    names: dict[int, np.ndarray] = {}
    for e in entries:
        c = e["class"]
        texts.setdefault(c, []).append((e["variant"], read_tensor(root / e["text_file"])))
        if c not in names:
            names[c] = read_tensor(root / e["name_file"])
    stacked = {c: np.stack([t for _, t in sorted(v, key=lambda x: x[0])]) for c, v in texts.items()}
    return PromptSet(sorted(stacked), stacked, names)


def location_latents(spec: CorpusSpec) -> np.ndarray:
    """The two location latents (left, right) as rows."""
    sem, _ = _latents(spec)
    base = spec.n_diseases + 1
    return sem[base:base + 2]


def flip_location(spec: CorpusSpec, pair: TokenPair) -> np.ndarray:
    """Text tokens of ``pair`` with the location keyword swapped to the other side.

    The token's noise is kept, so the hard negative differs from the positive
    text only in the laterality latent.
    """
    if not spec.hard_negative or pair.meta["class"] == NO_FINDING:
        raise ContractError(f"pair {pair.id} has no location keyword")
    loc = LOCATIONS.index(pair.meta["location"])
    v = location_latents(spec)
    j = pair.meta["keyword_indices"][1]
    out = pair.text_tokens.copy()
    out[:, j] += v[1 - loc] - v[loc]
    return out
