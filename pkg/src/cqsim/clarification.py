"""When-to-ask policies, what-to-ask target selection, and question/answer templates.

All policies share one target rule: among the turn's selected cliparts,
candidates are ordered by descending size entropy with ties broken by
ascending clipart id, and at most `max_targets` are kept. The policies only
differ in *whether* the turn asks at all.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .uncertainty import TurnUncertainty
from .world import Gallery, Scene, Size

MAX_TARGETS = 2


@dataclass(frozen=True)
class ThresholdPolicy:
    theta: float
    max_targets: int = MAX_TARGETS

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("theta must be >= 0")
        if self.max_targets < 1:
            raise ValueError("max_targets must be >= 1")


@dataclass(frozen=True)
class RandomPolicy:
    rate: float
    max_targets: int = MAX_TARGETS

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("rate must be in [0, 1]")


@dataclass(frozen=True)
class HumanPositionsPolicy:
    positions: frozenset[tuple[str, int]]
    max_targets: int = MAX_TARGETS


@dataclass(frozen=True)
class DeciderParams:
    weights: np.ndarray
    bias: float
    seed: int = 0
    iterations: int = 0

    def ask_probability(self, features: np.ndarray) -> float:
        z = float(self.weights @ np.asarray(features, dtype=np.float64) + self.bias)
        return 1.0 / (1.0 + np.exp(-z))

    def to_json(self) -> bytes:
        doc = {"weights": self.weights.tolist(), "bias": self.bias,
               "seed": self.seed, "iterations": self.iterations}
        return json.dumps(doc).encode("utf-8")

    @classmethod
    def from_json(cls, raw: bytes) -> "DeciderParams":
        doc = json.loads(raw.decode("utf-8"))
        return cls(weights=np.asarray(doc["weights"], dtype=np.float64),
                   bias=float(doc["bias"]), seed=int(doc.get("seed", 0)),
                   iterations=int(doc.get("iterations", 0)))


@dataclass(frozen=True)
class DeciderPolicy:
    params: DeciderParams
    max_targets: int = MAX_TARGETS


ClarificationPolicy = ThresholdPolicy | RandomPolicy | HumanPositionsPolicy | DeciderPolicy

SILENT = ThresholdPolicy(theta=float("inf"))


@dataclass
class DecideContext:
    dialogue_id: str = ""
    turn_index: int = 0
    rng: np.random.Generator | None = None
    features: np.ndarray | None = None


@dataclass(frozen=True)
class ClarificationExchange:
    question_text: str
    answer_text: str
    targets: tuple[tuple[int, Size], ...]
    turn_index: int
    fallback: bool = False  # answer used the not-in-scene fallback text


def _ranked_targets(tu: TurnUncertainty, max_targets: int, min_h: float) -> list[int]:
    candidates = [(c.h_size, c.clipart) for c in tu.per_clipart if c.h_size > min_h]
    candidates.sort(key=lambda pair: (-pair[0], pair[1]))
    return [cid for _, cid in candidates[:max_targets]]


def decide(policy: ClarificationPolicy, tu: TurnUncertainty,
           ctx: DecideContext | None = None) -> list[int]:
    """Return the clipart ids to ask about this turn (possibly none)."""
    ctx = ctx or DecideContext()
    if tu.empty:
        return []
    if isinstance(policy, ThresholdPolicy):
        return _ranked_targets(tu, policy.max_targets, policy.theta)
    if isinstance(policy, RandomPolicy):
        if ctx.rng is None:
            raise ValueError("random policy requires an rng in the context")
        if ctx.rng.random() >= policy.rate:
            return []
        return _ranked_targets(tu, policy.max_targets, 0.0)
    if isinstance(policy, HumanPositionsPolicy):
        if (ctx.dialogue_id, ctx.turn_index) not in policy.positions:
            return []
        return _ranked_targets(tu, policy.max_targets, 0.0)
    if isinstance(policy, DeciderPolicy):
        if ctx.features is None:
            raise ValueError("decider policy requires encoded features in the context")
        if policy.params.ask_probability(ctx.features) <= 0.5:
            return []
        return _ranked_targets(tu, policy.max_targets, 0.0)
    raise TypeError(f"unknown policy {policy!r}")


def render_question(targets: list[int], gallery: Gallery) -> str:
    if len(targets) == 1:
        return f"what size is the {gallery.name_of(targets[0])}?"
    if len(targets) == 2:
        return f"what size are the {gallery.name_of(targets[0])} and the {gallery.name_of(targets[1])}?"
    raise ValueError(f"questions target 1 or 2 cliparts, got {len(targets)}")


def render_answer(targets: list[int], target_scene: Scene,
                  gallery: Gallery) -> tuple[str, list[tuple[int, Size | None]], bool]:
    """Fill the answer template from the ground-truth scene.

    Returns (text, [(clipart, size or None)], fallback_used). A target absent
    from the scene yields the "is not in the scene" fallback clause.
    """
    if not 1 <= len(targets) <= MAX_TARGETS:
        raise ValueError(f"answers cover 1 or 2 cliparts, got {len(targets)}")
    clauses = []
    answered: list[tuple[int, Size | None]] = []
    fallback = False
    for cid in targets:
        name = gallery.name_of(cid)
        placement = target_scene.get(cid)
        if placement is None:
            clauses.append(f"the {name} is not in the scene")
            answered.append((cid, None))
            fallback = True
        else:
            clauses.append(f"the {name} is {placement.size.label}")
            answered.append((cid, placement.size))
    return " and ".join(clauses), answered, fallback


def parse_answer_sizes(text: str, targets: list[int],
                       gallery: Gallery) -> list[tuple[int, Size]] | None:
    """Lenient size extraction from a free-form answer.

    Sizes are matched by clipart-name mention where possible, otherwise
    assigned in question order. Returns None when no size word is present.
    """
    lowered = text.lower()
    found: list[tuple[int, Size]] = []
    size_events = []
    for label in ("small", "medium", "large"):
        start = 0
        while True:
            pos = lowered.find(label, start)
            if pos < 0:
                break
            size_events.append((pos, Size.from_label(label)))
            start = pos + 1
    if not size_events:
        return None
    size_events.sort()
    remaining = list(targets)
    for cid in list(remaining):
        name = gallery.name_of(cid)
        pos = lowered.find(name)
        if pos < 0:
            continue
        best = min(size_events, key=lambda ev: abs(ev[0] - pos), default=None)
        if best is not None:
            found.append((cid, best[1]))
            size_events.remove(best)
            remaining.remove(cid)
    for cid in remaining:
        if not size_events:
            break
        pos, size = size_events.pop(0)
        found.append((cid, size))
    found.sort(key=lambda pair: targets.index(pair[0]))
    return found


def train_decider(samples: list[tuple[np.ndarray, bool]],
                  lr: float = 0.5, iters: int = 2000, seed: int = 0) -> DeciderParams:
    """Logistic regression on frozen drawer encodings via plain gradient descent."""
    if not samples:
        raise ValueError("no decider training samples")
    X = np.stack([np.asarray(f, dtype=np.float64) for f, _ in samples])
    y = np.array([1.0 if asked else 0.0 for _, asked in samples])
    if y.min() == y.max():
        raise ValueError("single-class labels: decider needs both asked and silent turns")
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(iters):
        p = 1.0 / (1.0 + np.exp(-(X @ w + b)))
        err = p - y
        w -= lr * (X.T @ err) / n
        b -= lr * float(err.mean())
    return DeciderParams(weights=w, bias=b, seed=seed, iterations=iters)


def parse_policy_spec(spec: str, human_positions: frozenset | None = None) -> ClarificationPolicy:
    """Parse CLI policy strings: threshold:θ, random:rate, human, decider:<file>, silent."""
    spec = spec.strip()
    if spec == "silent":
        return SILENT
    if spec == "human":
        return HumanPositionsPolicy(positions=human_positions or frozenset())
    kind, sep, arg = spec.partition(":")
    if kind == "threshold" and sep:
        return ThresholdPolicy(theta=float(arg))
    if kind == "random" and sep:
        return RandomPolicy(rate=float(arg))
    if kind == "decider" and sep:
        from pathlib import Path
        return DeciderPolicy(params=DeciderParams.from_json(Path(arg).read_bytes()))
    raise ValueError(f"unparseable policy spec {spec!r}")
