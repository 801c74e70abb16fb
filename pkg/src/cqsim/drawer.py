"""The trainable drawer: text/canvas encoders, per-clipart action heads, SGD training.

The text encoder is a mean of token embeddings feeding two tanh layers and a
per-clipart output head (8 values per clipart, see `kernels`). Selection
targets include cliparts that are *modified* at a turn, not only newly added
ones, so the model learns to re-select cliparts it must update after a
clarification answer.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .world import Flip, Gallery, Placement, Scene, Size

EMBED_DIM = 64
HIDDEN_DIM = 256
HEAD_WIDTH = kernels.HEAD_WIDTH
INIT_SCALE = 0.08
SCHEMA_VERSION = 1

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation; punctuation marks are tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    index: dict[str, int] = field(repr=False)

    @classmethod
    def from_tokens(cls, tokens: list[str]) -> "Vocabulary":
        ordered = (PAD_TOKEN, UNK_TOKEN) + tuple(tokens)
        if len(set(ordered)) != len(ordered):
            raise ValueError("duplicate tokens in vocabulary")
        return cls(tokens=ordered, index={t: i for i, t in enumerate(ordered)})

    @classmethod
    def from_texts(cls, texts: list[str]) -> "Vocabulary":
        seen = {tok for text in texts for tok in tokenize(text)}
        seen.discard(PAD_TOKEN)
        seen.discard(UNK_TOKEN)
        return cls.from_tokens(sorted(seen))

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, text: str) -> np.ndarray:
        return np.array([self.index.get(tok, UNK_INDEX) for tok in tokenize(text)], dtype=np.int64)


@dataclass
class DrawerParams:
    emb: np.ndarray  # (V, EMBED_DIM)
    W1: np.ndarray   # (HIDDEN_DIM, EMBED_DIM + G*HEAD_WIDTH)
    b1: np.ndarray
    W2: np.ndarray   # (HIDDEN_DIM, HIDDEN_DIM)
    b2: np.ndarray
    WH: np.ndarray   # (G*HEAD_WIDTH, HIDDEN_DIM)
    bH: np.ndarray
    vocab: Vocabulary
    gallery_hash: str
    seed: int
    epochs_trained: int = 0

    TENSOR_NAMES = ("emb", "W1", "b1", "W2", "b2", "WH", "bH")

    @property
    def gallery_size(self) -> int:
        return self.bH.shape[0] // HEAD_WIDTH

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.TENSOR_NAMES}

    def copy(self) -> "DrawerParams":
        return DrawerParams(
            **{name: getattr(self, name).copy() for name in self.TENSOR_NAMES},
            vocab=self.vocab,
            gallery_hash=self.gallery_hash,
            seed=self.seed,
            epochs_trained=self.epochs_trained,
        )

    def validate(self) -> None:
        V, G = len(self.vocab), self.gallery_size
        dims = {
            "emb": (V, EMBED_DIM),
            "W1": (HIDDEN_DIM, EMBED_DIM + G * HEAD_WIDTH),
            "b1": (HIDDEN_DIM,),
            "W2": (HIDDEN_DIM, HIDDEN_DIM),
            "b2": (HIDDEN_DIM,),
            "WH": (G * HEAD_WIDTH, HIDDEN_DIM),
            "bH": (G * HEAD_WIDTH,),
        }
        for name, shape in dims.items():
            t = getattr(self, name)
            if t.shape != shape:
                raise ValueError(f"tensor {name} has shape {t.shape}, expected {shape}")
            if not np.all(np.isfinite(t)):
                raise ValueError(f"tensor {name} contains non-finite entries")


def init_params(vocab: Vocabulary, gallery: Gallery, seed: int) -> DrawerParams:
    """Uniform ±0.08 initialization, reproducible per seed."""
    rng = np.random.default_rng(seed)
    G = len(gallery)
    D = EMBED_DIM + G * HEAD_WIDTH

    def u(*shape):
        return rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)

    return DrawerParams(
        emb=u(len(vocab), EMBED_DIM),
        W1=u(HIDDEN_DIM, D),
        b1=u(HIDDEN_DIM),
        W2=u(HIDDEN_DIM, HIDDEN_DIM),
        b2=u(HIDDEN_DIM),
        WH=u(G * HEAD_WIDTH, HIDDEN_DIM),
        bH=u(G * HEAD_WIDTH),
        vocab=vocab,
        gallery_hash=gallery.manifest_hash,
        seed=seed,
    )


@dataclass(frozen=True)
class DrawerOutput:
    scores: np.ndarray     # (G,)
    size_dist: np.ndarray  # (G, 3)
    flip_dist: np.ndarray  # (G, 2)
    pos: np.ndarray        # (G, 2)

    def selected_ids(self) -> list[int]:
        return [int(c) for c in np.nonzero(self.scores > 0.0)[0]]


def encode_text(params: DrawerParams, token_ids: np.ndarray) -> np.ndarray:
    """Mean of embedding rows; the zero vector for empty input."""
    if len(token_ids) == 0:
        return np.zeros(EMBED_DIM)
    if token_ids.max() >= len(params.vocab):
        raise ValueError(f"token index {int(token_ids.max())} out of vocabulary range")
    return params.emb[token_ids].mean(axis=0)


def encode_canvas(scene: Scene, gallery: Gallery) -> np.ndarray:
    """Per clipart: [present, size one-hot(3), flip one-hot(2), x, y]; absent blocks stay zero."""
    vec = np.zeros(len(gallery) * HEAD_WIDTH)
    for cid, p in scene.placements.items():
        base = cid * HEAD_WIDTH
        vec[base] = 1.0
        vec[base + 1 + int(p.size)] = 1.0
        vec[base + 4 + int(p.flip)] = 1.0
        vec[base + 6] = p.x
        vec[base + 7] = p.y
    return vec


def decode_canvas(vec: np.ndarray, gallery: Gallery) -> Scene:
    """Inverse of encode_canvas for the encoded fields; person expression/pose default to 0."""
    placements = {}
    for cid in range(len(gallery)):
        base = cid * HEAD_WIDTH
        if vec[base] <= 0.5:
            continue
        entry = gallery[cid]
        placements[cid] = Placement(
            clipart=cid,
            size=Size(int(np.argmax(vec[base + 1:base + 4]))),
            flip=Flip(int(np.argmax(vec[base + 4:base + 6]))),
            x=float(vec[base + 6]),
            y=float(vec[base + 7]),
            expression=0 if entry.is_person else None,
            pose=0 if entry.is_person else None,
        )
    return Scene(placements)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=-1, keepdims=True)


def _raw_forward(params: DrawerParams, token_batches: list[np.ndarray],
                 canvas_vecs: np.ndarray):
    B = len(token_batches)
    TXT = np.zeros((B, EMBED_DIM))
    for i, toks in enumerate(token_batches):
        TXT[i] = encode_text(params, toks)
    X = np.hstack([TXT, canvas_vecs])
    H1, H2, O = kernels.dense_forward(X, params.W1, params.b1, params.W2, params.b2,
                                      params.WH, params.bH)
    return X, H1, H2, O


def forward(params: DrawerParams, text: str | np.ndarray, scene: Scene,
            gallery: Gallery) -> DrawerOutput:
    """Run one deterministic forward pass for a single (text, canvas) input."""
    token_ids = params.vocab.encode(text) if isinstance(text, str) else text
    canvas = encode_canvas(scene, gallery)[None, :]
    _, _, _, O = _raw_forward(params, [token_ids], canvas)
    out = O.reshape(len(gallery), HEAD_WIDTH)
    return DrawerOutput(
        scores=out[:, 0].copy(),
        size_dist=_softmax_rows(out[:, 1:4]),
        flip_dist=_softmax_rows(out[:, 4:6]),
        pos=1.0 / (1.0 + np.exp(-out[:, 6:8])),
    )


# --- training ----------------------------------------------------------------

@dataclass(frozen=True)
class TrainingTurn:
    """One supervised step: text in, canvas state, and the placements to produce.

    `targets` maps clipart id -> true placement for every clipart added or
    modified at this turn; everything else carries a not-selected target.
    """

    input_text: str
    canvas_before: Scene
    targets: dict[int, Placement]


@dataclass(frozen=True)
class EncodedTurn:
    token_ids: np.ndarray
    canvas_vec: np.ndarray
    sel: np.ndarray     # (G,) float 0/1
    size_t: np.ndarray  # (G,) int64
    flip_t: np.ndarray  # (G,) int64
    pos_t: np.ndarray   # (G, 2)


def encode_training_turn(turn: TrainingTurn, vocab: Vocabulary, gallery: Gallery) -> EncodedTurn:
    G = len(gallery)
    sel = np.zeros(G)
    size_t = np.zeros(G, dtype=np.int64)
    flip_t = np.zeros(G, dtype=np.int64)
    pos_t = np.full((G, 2), 0.5)
    for cid, p in turn.targets.items():
        p.validate(gallery)
        sel[cid] = 1.0
        size_t[cid] = int(p.size)
        flip_t[cid] = int(p.flip)
        pos_t[cid] = (p.x, p.y)
    return EncodedTurn(
        token_ids=vocab.encode(turn.input_text),
        canvas_vec=encode_canvas(turn.canvas_before, gallery),
        sel=sel, size_t=size_t, flip_t=flip_t, pos_t=pos_t,
    )


def turn_loss(output: DrawerOutput, targets: dict[int, Placement], gallery: Gallery) -> float:
    """Loss of a single already-computed output (natural log), matching training."""
    eps = 1e-12
    asym = gallery.asymmetric_mask()
    p_sel = 1.0 / (1.0 + np.exp(-output.scores))
    loss = 0.0
    for cid in range(len(gallery)):
        y = 1.0 if cid in targets else 0.0
        p = min(max(p_sel[cid], eps), 1.0 - eps)
        loss += -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    for cid, t in targets.items():
        loss += -np.log(max(output.size_dist[cid, int(t.size)], eps))
        if asym[cid]:
            loss += -np.log(max(output.flip_dist[cid, int(t.flip)], eps))
        dx = output.pos[cid, 0] - t.x
        dy = output.pos[cid, 1] - t.y
        loss += dx * dx + dy * dy
    return float(loss)


def batch_loss_and_grads(params: DrawerParams, batch: list[EncodedTurn],
                         asym: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Mean loss over a batch plus gradients for every parameter tensor."""
    B = len(batch)
    G = params.gallery_size
    canvas = np.stack([t.canvas_vec for t in batch])
    tokens = [t.token_ids for t in batch]
    X, H1, H2, O = _raw_forward(params, tokens, canvas)
    O3 = np.ascontiguousarray(O.reshape(B, G, HEAD_WIDTH))
    sel = np.stack([t.sel for t in batch])
    size_t = np.stack([t.size_t for t in batch])
    flip_t = np.stack([t.flip_t for t in batch])
    pos_t = np.stack([t.pos_t for t in batch])
    loss_sum, dO = kernels.head_loss_grads(O3, sel, size_t, flip_t, pos_t, asym)
    dO2 = np.ascontiguousarray(dO.reshape(B, G * HEAD_WIDTH))
    dW1, db1, dW2, db2, dWH, dbH, dX = kernels.dense_backward(
        dO2, X, H1, H2, params.W1, params.W2, params.WH)
    demb = np.zeros_like(params.emb)
    for i, toks in enumerate(tokens):
        if len(toks):
            np.add.at(demb, toks, dX[i, :EMBED_DIM] / len(toks))
    grads = {"emb": demb, "W1": dW1, "b1": db1, "W2": dW2, "b2": db2, "WH": dWH, "bH": dbH}
    for g in grads.values():
        g /= B
    return loss_sum / B, grads


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    momentum: float = 0.9
    epochs: int = 15
    batch_size: int = 32
    seed: int = 0


@dataclass
class TrainResult:
    params: DrawerParams
    checkpoints: dict[int, DrawerParams]
    epoch_losses: list[float]


def train(turns: list[TrainingTurn], vocab: Vocabulary, gallery: Gallery,
          config: TrainConfig = TrainConfig(),
          checkpoint_epochs: tuple[int, ...] = ()) -> TrainResult:
    """Mini-batch SGD with momentum; bit-deterministic per (seed, corpus, config)."""
    if not turns:
        raise ValueError("training corpus is empty")
    params = init_params(vocab, gallery, config.seed)
    encoded = [encode_training_turn(t, vocab, gallery) for t in turns]
    asym = gallery.asymmetric_mask().astype(np.float64)
    rng = np.random.default_rng(config.seed)
    velocity = {name: np.zeros_like(t) for name, t in params.tensors().items()}
    checkpoints: dict[int, DrawerParams] = {}
    epoch_losses: list[float] = []
    n = len(encoded)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = [encoded[i] for i in order[start:start + config.batch_size]]
            loss, grads = batch_loss_and_grads(params, batch, asym)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss {loss} at epoch {epoch}, batch starting {start} "
                    f"(lr={config.lr}, momentum={config.momentum})")
            total += loss * len(batch)
            for name in params.TENSOR_NAMES:
                v = velocity[name]
                v *= config.momentum
                v -= config.lr * grads[name]
                getattr(params, name)[...] += v
        epoch_losses.append(total / n)
        params.epochs_trained = epoch
        if epoch in checkpoint_epochs:
            checkpoints[epoch] = params.copy()
    return TrainResult(params=params, checkpoints=checkpoints, epoch_losses=epoch_losses)


@dataclass
class Ensemble:
    members: list[DrawerParams]

    def __post_init__(self):
        if not self.members:
            raise ValueError("ensemble needs at least one member")
        shapes = {tuple(t.shape for t in m.tensors().values()) for m in self.members}
        if len(shapes) != 1:
            raise ValueError("ensemble members disagree on architecture dims")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def primary(self) -> DrawerParams:
        return self.members[0]

    def forward_all(self, text, scene: Scene, gallery: Gallery) -> list[DrawerOutput]:
        return [forward(m, text, scene, gallery) for m in self.members]


def train_ensemble(turns: list[TrainingTurn], vocab: Vocabulary, gallery: Gallery,
                   config: TrainConfig = TrainConfig(),
                   seeds: tuple[int, ...] = (0, 1, 2, 3, 4),
                   checkpoint_epochs: tuple[int, ...] = ()) -> tuple[Ensemble, dict]:
    """Independently train one member per seed; returns (ensemble, {seed: TrainResult})."""
    results = {}
    for seed in seeds:
        cfg = TrainConfig(lr=config.lr, momentum=config.momentum, epochs=config.epochs,
                          batch_size=config.batch_size, seed=seed)
        results[seed] = train(turns, vocab, gallery, cfg, checkpoint_epochs)
    return Ensemble([results[s].params for s in seeds]), results


# --- persistence --------------------------------------------------------------

def save_params(params: DrawerParams) -> bytes:
    params.validate()
    doc = {
        "schema_version": SCHEMA_VERSION,
        "gallery_hash": params.gallery_hash,
        "vocab": list(params.vocab.tokens),
        "dims": {
            "vocab": len(params.vocab),
            "embed": EMBED_DIM,
            "hidden": HIDDEN_DIM,
            "gallery": params.gallery_size,
            "head": HEAD_WIDTH,
        },
        "seed": params.seed,
        "epochs_trained": params.epochs_trained,
        "tensors": {name: t.tolist() for name, t in params.tensors().items()},
    }
    return json.dumps(doc).encode("utf-8")


def load_params(raw: bytes, gallery: Gallery | None = None) -> DrawerParams:
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"unparseable weight file: {exc}") from exc
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported weight schema_version {version!r}, expected {SCHEMA_VERSION}")
    tokens = doc["vocab"]
    if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
        raise ValueError("vocabulary must reserve <pad> at 0 and <unk> at 1")
    vocab = Vocabulary.from_tokens(tokens[2:])
    params = DrawerParams(
        **{name: np.asarray(doc["tensors"][name], dtype=np.float64)
           for name in DrawerParams.TENSOR_NAMES},
        vocab=vocab,
        gallery_hash=doc["gallery_hash"],
        seed=int(doc["seed"]),
        epochs_trained=int(doc["epochs_trained"]),
    )
    params.validate()
    if doc["dims"]["vocab"] != len(vocab) or doc["dims"]["gallery"] != params.gallery_size:
        raise ValueError("dims block disagrees with tensor shapes")
    if gallery is not None:
        if params.gallery_size != len(gallery):
            raise ValueError(
                f"weights built for gallery of {params.gallery_size}, current has {len(gallery)}")
        if params.gallery_hash != gallery.manifest_hash:
            raise ValueError("weights were trained against a different gallery manifest")
    return params
