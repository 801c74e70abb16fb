"""Study machinery: scratch logistic regression, ranking metrics, the seed x epoch
uncertainty-vs-human-asking grid, and keyword-cluster analysis of instructions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clarification import SILENT
from .dialogue import RunSpec, TellerScript, run_dialogue
from .drawer import DrawerParams, Ensemble, tokenize
from .metrics import similarity_v2
from .uncertainty import SELECT_NORMALIZED
from .world import Gallery

FEATURE_NAMES = ("u_select", "h_size", "h_flip", "u_position")


# --- logistic regression -------------------------------------------------------

@dataclass
class RegressionModel:
    weights: np.ndarray
    bias: float
    feature_means: np.ndarray
    feature_stds: np.ndarray
    l2_lambda: float
    iterations: int = 0

    def _standardize(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.feature_means) / self.feature_stds

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        z = self._standardize(X) @ self.weights + self.bias
        return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class FitConfig:
    l2_lambda: float = 1.0
    lr: float = 0.5
    max_iters: int = 10000
    tol: float = 1e-8
    seed: int = 0


def penalized_nll(weights: np.ndarray, bias: float, Xs: np.ndarray, y: np.ndarray,
                  l2_lambda: float) -> float:
    """Mean negative log-likelihood plus the (scaled) L2 penalty on the weights."""
    z = Xs @ weights + bias
    n = len(y)
    nll = float(np.mean(np.logaddexp(0.0, z) - y * z))
    return nll + l2_lambda * float(weights @ weights) / (2.0 * n)


def nll_gradients(weights: np.ndarray, bias: float, Xs: np.ndarray, y: np.ndarray,
                  l2_lambda: float) -> tuple[np.ndarray, float]:
    n = len(y)
    p = 1.0 / (1.0 + np.exp(-(Xs @ weights + bias)))
    err = p - y
    gw = (Xs.T @ err + l2_lambda * weights) / n
    gb = float(err.mean())
    return gw, gb


def fit_logistic(X: np.ndarray, y: np.ndarray, config: FitConfig = FitConfig()) -> RegressionModel:
    """Gradient descent on the L2-penalized log-likelihood over z-scored features."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two rows of features")
    if set(np.unique(y)) != {0.0, 1.0}:
        raise ValueError("labels must contain both classes")
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    if np.any(stds <= 0.0):
        bad = [i for i in range(X.shape[1]) if stds[i] <= 0.0]
        raise ValueError(f"constant feature(s) at column(s) {bad}")
    Xs = (X - means) / stds
    w = np.zeros(X.shape[1])
    b = 0.0
    iters = 0
    for iters in range(1, config.max_iters + 1):
        gw, gb = nll_gradients(w, b, Xs, y, config.l2_lambda)
        if max(np.abs(gw).max(), abs(gb)) < config.tol:
            break
        w -= config.lr * gw
        b -= config.lr * gb
    return RegressionModel(weights=w, bias=b, feature_means=means, feature_stds=stds,
                           l2_lambda=config.l2_lambda, iterations=iters)


# --- ranking metrics -----------------------------------------------------------

def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """Step-summed AP; ties keep input order (stable sort by descending score)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive label")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order]
    tp = np.cumsum(ranked)
    ranks = np.arange(1, len(ranked) + 1)
    precision = tp / ranks
    return float(precision[ranked == 1].sum() / n_pos)


def f1_score(predictions: np.ndarray, labels: np.ndarray) -> float:
    predictions = np.asarray(predictions, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    tp = int((predictions & labels).sum())
    fp = int((predictions & ~labels).sum())
    fn = int((~predictions & labels).sum())
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def f1_at_half(model: RegressionModel, X: np.ndarray, y: np.ndarray) -> float:
    return f1_score(model.predict_proba(X) > 0.5, np.asarray(y, dtype=bool))


def permutation_test_ap(scores: np.ndarray, labels: np.ndarray,
                        resamples: int = 1000, seed: int = 0) -> tuple[float, float, float]:
    """Observed AP vs label-preserving score shuffles.

    Returns (observed_ap, baseline_ap, p_value) where the baseline is the mean
    AP over shuffles and p is the fraction of shuffles with AP >= observed.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    observed = average_precision(scores, labels)
    rng = np.random.default_rng(seed)
    aps = np.empty(resamples)
    for i in range(resamples):
        aps[i] = average_precision(rng.permutation(scores), labels)
    baseline = float(aps.mean())
    p_value = float((aps >= observed).mean())
    return observed, baseline, p_value


# --- study rows and the grid -----------------------------------------------------

@dataclass(frozen=True)
class StudyRow:
    dialogue_id: str
    turn_index: int
    features: tuple[float, float, float, float]
    label: bool


@dataclass(frozen=True)
class FeatureRow:
    dialogue_id: str
    turn_index: int
    u_select: float
    h_size: float
    h_flip: float
    u_position: float

    def features(self) -> tuple[float, float, float, float]:
        return (self.u_select, self.h_size, self.h_flip, self.u_position)


def extract_feature_rows(params: DrawerParams, ensemble: Ensemble,
                         scripts: list[TellerScript], gallery: Gallery,
                         ) -> tuple[list[FeatureRow], float]:
    """Silent replay with `params`; per-turn max-aggregated uncertainty features.

    Turns where nothing is selected produce no row. Also returns the mean
    similarity score of the replayed dialogues (for the per-epoch series).
    """
    rows: list[FeatureRow] = []
    ss_values = []
    for script in scripts:
        transcript = run_dialogue(RunSpec(
            script=script, params=params, policy=SILENT, gallery=gallery,
            ensemble=ensemble, want_position=True, select_mode=SELECT_NORMALIZED))
        ss_values.append(similarity_v2(script.target, transcript.final_scene, gallery).total)
        for turn in transcript.turns:
            tu = turn.uncertainty
            if tu.empty:
                continue
            rows.append(FeatureRow(
                dialogue_id=script.dialogue_id,
                turn_index=turn.turn_index,
                u_select=tu.u_select_max,
                h_size=tu.h_size_max,
                h_flip=tu.h_flip_max,
                u_position=tu.u_position_max,
            ))
    return rows, float(np.mean(ss_values)) if ss_values else 0.0


def attach_labels(rows: list[FeatureRow], asked: dict[tuple[str, int], bool],
                  next_turn: bool = True) -> list[StudyRow]:
    """Label each feature row with the human decision at the follow-up turn."""
    offset = 1 if next_turn else 0
    return [
        StudyRow(r.dialogue_id, r.turn_index, r.features(),
                 bool(asked.get((r.dialogue_id, r.turn_index + offset), False)))
        for r in rows
    ]


@dataclass
class StudyCellResult:
    seed: int
    epoch: int
    ap: float
    ap_baseline: float
    p_value: float
    f1: float
    similarity: float
    prevalence: float
    n_train: int
    n_eval: int
    mean_features: dict[str, float]
    coefficients: dict[str, tuple[float, float, float] | None]
    dropped_features: tuple[str, ...] = ()
    note: str = ""


@dataclass
class StudyGridReport:
    cells: list[StudyCellResult]
    epochs: tuple[int, ...]
    seeds: tuple[int, ...]

    def epoch_series(self) -> list[dict]:
        def mean_of(values):
            good = [v for v in values if not math.isnan(v)]
            return float(np.mean(good)) if good else float("nan")

        series = []
        for epoch in self.epochs:
            cells = [c for c in self.cells if c.epoch == epoch]
            series.append({
                "epoch": epoch,
                "ap": mean_of([c.ap for c in cells]),
                "ap_baseline": mean_of([c.ap_baseline for c in cells]),
                "f1": mean_of([c.f1 for c in cells]),
                "similarity": mean_of([c.similarity for c in cells]),
                **{f"mean_{name}": mean_of([c.mean_features.get(name, float("nan"))
                                            for c in cells])
                   for name in FEATURE_NAMES},
            })
        return series


@dataclass(frozen=True)
class StudyConfig:
    train_fraction: float = 0.7
    seed: int = 0
    fit: FitConfig = FitConfig()
    permutation_resamples: int = 1000
    bootstrap_resamples: int = 1000
    bootstrap_max_iters: int = 800


def _fit_cell(rows: list[StudyRow], config: StudyConfig,
              eval_rows: list[StudyRow]) -> tuple[dict, RegressionModel | None, tuple[str, ...]]:
    X = np.array([r.features for r in rows])
    y = np.array([r.label for r in rows], dtype=np.float64)
    keep = [i for i in range(X.shape[1]) if X[:, i].std() > 0.0]
    dropped = tuple(FEATURE_NAMES[i] for i in range(X.shape[1]) if i not in keep)
    if not keep or y.min() == y.max():
        return {}, None, dropped
    model = fit_logistic(X[:, keep], y, config.fit)
    return {"keep": keep}, model, dropped


def study_grid(checkpoints: dict[int, dict[int, DrawerParams]],
               scripts: list[TellerScript],
               asked: dict[tuple[str, int], bool],
               gallery: Gallery,
               config: StudyConfig = StudyConfig()) -> StudyGridReport:
    """The seed x epoch grid: fit ask-prediction models on uncertainty features.

    `checkpoints[seed][epoch]` must cover the full grid. Features come from a
    silent replay per cell (the seed's model drives, the epoch's ensemble of
    all seeds provides position variance); rows split 70/30 by dialogue.
    """
    seeds = tuple(sorted(checkpoints))
    epochs = tuple(sorted(next(iter(checkpoints.values()))))
    for s in seeds:
        if sorted(checkpoints[s]) != list(epochs):
            raise ValueError(f"seed {s} is missing checkpoints: have {sorted(checkpoints[s])}")

    ids = [s.dialogue_id for s in scripts]
    rng = np.random.default_rng(config.seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n_train = int(round(config.train_fraction * len(order)))
    train_ids = set(order[:n_train])

    cells = []
    for epoch in epochs:
        members = Ensemble([checkpoints[s][epoch] for s in seeds])
        for seed in seeds:
            feature_rows, mean_ss = extract_feature_rows(
                checkpoints[seed][epoch], members, scripts, gallery)
            rows = attach_labels(feature_rows, asked)
            train = [r for r in rows if r.dialogue_id in train_ids]
            evaluation = [r for r in rows if r.dialogue_id not in train_ids]
            mean_features = {
                name: (float(np.mean([r.features[i] for r in rows])) if rows else float("nan"))
                for i, name in enumerate(FEATURE_NAMES)
            }

            def nan_cell(note, prevalence=float("nan"), dropped=()):
                return StudyCellResult(
                    seed=seed, epoch=epoch, ap=float("nan"), ap_baseline=float("nan"),
                    p_value=float("nan"), f1=float("nan"), similarity=mean_ss,
                    prevalence=prevalence, n_train=len(train), n_eval=len(evaluation),
                    mean_features=mean_features,
                    coefficients={name: None for name in FEATURE_NAMES},
                    dropped_features=tuple(dropped), note=note)

            if not train or not evaluation:
                # an under-trained checkpoint can select nothing, yielding no rows
                cells.append(nan_cell("insufficient rows"))
                continue
            meta, model, dropped = _fit_cell(train, config, evaluation)
            Xe = np.array([r.features for r in evaluation])
            ye = np.array([r.label for r in evaluation], dtype=np.int64)
            prevalence = float(ye.mean())
            if model is None:
                cells.append(nan_cell("degenerate training rows", prevalence, dropped))
                continue
            if ye.sum() == 0:
                cells.append(nan_cell("no positive labels in eval split", prevalence, dropped))
                continue
            keep = meta["keep"]
            probs = model.predict_proba(Xe[:, keep])
            ap, baseline, p_value = permutation_test_ap(
                probs, ye, resamples=config.permutation_resamples,
                seed=config.seed + 1000 * epoch + seed)
            f1 = f1_score(probs > 0.5, ye.astype(bool))
            coefficients = _bootstrap_coefficients(train, keep, config, seed_offset=epoch * 100 + seed)
            cells.append(StudyCellResult(
                seed=seed, epoch=epoch, ap=ap, ap_baseline=baseline, p_value=p_value,
                f1=f1, similarity=mean_ss, prevalence=prevalence,
                n_train=len(train), n_eval=len(evaluation),
                mean_features=mean_features, coefficients=coefficients,
                dropped_features=dropped))
    return StudyGridReport(cells=cells, epochs=epochs, seeds=seeds)


def _bootstrap_coefficients(train: list[StudyRow], keep: list[int], config: StudyConfig,
                            seed_offset: int) -> dict[str, tuple[float, float, float] | None]:
    X = np.array([r.features for r in train])[:, keep]
    y = np.array([r.label for r in train], dtype=np.float64)
    point = fit_logistic(X, y, config.fit)
    rng = np.random.default_rng(config.seed + seed_offset)
    boot_cfg = FitConfig(l2_lambda=config.fit.l2_lambda, lr=config.fit.lr,
                         max_iters=config.bootstrap_max_iters, tol=config.fit.tol)
    samples = []
    n = len(y)
    for _ in range(config.bootstrap_resamples):
        idx = rng.integers(0, n, size=n)
        yb = y[idx]
        Xb = X[idx]
        if yb.min() == yb.max() or np.any(Xb.std(axis=0) <= 0.0):
            continue
        samples.append(fit_logistic(Xb, yb, boot_cfg).weights)
    coefficients: dict[str, tuple[float, float, float] | None] = {
        name: None for name in FEATURE_NAMES}
    if samples:
        arr = np.stack(samples)
        lo = np.percentile(arr, 2.5, axis=0)
        hi = np.percentile(arr, 97.5, axis=0)
        for j, col in enumerate(keep):
            coefficients[FEATURE_NAMES[col]] = (float(point.weights[j]), float(lo[j]), float(hi[j]))
    else:
        for j, col in enumerate(keep):
            coefficients[FEATURE_NAMES[col]] = (float(point.weights[j]),
                                                float("nan"), float("nan"))
    return coefficients


# --- keyword clusters ------------------------------------------------------------

Constraint = tuple[str, int] | None  # ("exact", k) | ("ge", k) | None


@dataclass(frozen=True)
class ClusterSpec:
    name: str
    clipart: Constraint = None
    size: Constraint = None
    location: Constraint = None

    def __post_init__(self):
        if self.clipart is None and self.size is None and self.location is None:
            raise ValueError(f"cluster {self.name}: at least one constraint required")

    @staticmethod
    def _matches(constraint: Constraint, count: int) -> bool:
        if constraint is None:
            return True
        kind, k = constraint
        if kind == "exact":
            return count == k
        if kind == "ge":
            return count >= k
        raise ValueError(f"unknown constraint kind {kind!r}")

    def matches(self, clipart_count: int, size_count: int, location_count: int) -> bool:
        return (self._matches(self.clipart, clipart_count)
                and self._matches(self.size, size_count)
                and self._matches(self.location, location_count))


def default_cluster_specs() -> list[ClusterSpec]:
    return [
        ClusterSpec("A", clipart=("exact", 1), size=("exact", 1), location=("ge", 1)),
        ClusterSpec("B", clipart=("ge", 1), location=("exact", 0)),
        ClusterSpec("C", clipart=("ge", 1), size=("exact", 0)),
        ClusterSpec("D", clipart=("exact", 1), location=("exact", 0)),
        ClusterSpec("E", clipart=("exact", 1), size=("exact", 0)),
        ClusterSpec("F", clipart=("exact", 1)),
    ]


def count_keywords(text: str, lexicon: list[str]) -> int:
    """Whole-token, case-insensitive keyword occurrences; longest phrase wins."""
    if not lexicon:
        raise ValueError("empty lexicon")
    tokens = tokenize(text)
    phrases = sorted((tuple(tokenize(entry)) for entry in lexicon), key=len, reverse=True)
    count = 0
    i = 0
    while i < len(tokens):
        matched = False
        for phrase in phrases:
            if phrase and tuple(tokens[i:i + len(phrase)]) == phrase:
                count += 1
                i += len(phrase)
                matched = True
                break
        if not matched:
            i += 1
    return count


@dataclass(frozen=True)
class ClusterInput:
    dialogue_id: str
    text: str
    followed_by_cq: bool
    cq_attributes: frozenset[str] = frozenset()


@dataclass(frozen=True)
class ClusterRow:
    name: str
    n_utterances: int
    pct_cq: float
    attribute_share: dict[str, float]


def cluster_analysis(inputs: list[ClusterInput],
                     clipart_lexicon: list[str],
                     size_lexicon: list[str],
                     location_lexicon: list[str],
                     specs: list[ClusterSpec] | None = None) -> list[ClusterRow]:
    """Bucket instructions by keyword-count constraints; report follow-up CQ rates."""
    specs = specs if specs is not None else default_cluster_specs()
    counted = [
        (inp,
         count_keywords(inp.text, clipart_lexicon),
         count_keywords(inp.text, size_lexicon),
         count_keywords(inp.text, location_lexicon))
        for inp in inputs
    ]
    rows = []
    for spec in specs:
        members = [inp for inp, c, s, l in counted if spec.matches(c, s, l)]
        cq_members = [inp for inp in members if inp.followed_by_cq]
        attr_counts: dict[str, int] = {}
        for inp in cq_members:
            for tag in inp.cq_attributes:
                attr_counts[tag] = attr_counts.get(tag, 0) + 1
        share = {tag: attr_counts[tag] / len(cq_members) for tag in sorted(attr_counts)} \
            if cq_members else {}
        rows.append(ClusterRow(
            name=spec.name,
            n_utterances=len(members),
            pct_cq=100.0 * len(cq_members) / len(members) if members else 0.0,
            attribute_share=share,
        ))
    return rows
