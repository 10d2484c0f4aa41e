"""Log-bilinear multi-label matching classifier.

A document embedding is projected by a learnable adapter, scored against
every class row through a bilinear interaction matrix, and squashed to a
probability. Targets come from two sources: refined core classes (their
ancestors are positive too, their descendants are left out of the loss)
and generated path documents (the path is positive, everything else
negative). Training minimizes the summed binary cross entropy with the
generated-set term weighted by the corpus-to-generated size ratio.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from teleclass import kernels
from teleclass.errors import TeleclassError
from teleclass.taxonomy import LabelPath, Taxonomy
from teleclass.vectors import VectorStore

log = logging.getLogger(__name__)

SCORE_FORMS = ("sigmoid_linear", "sigmoid_exp")


@dataclass
class TargetSets:
    positives: frozenset[int]
    negatives: frozenset[int]
    unlabeled: frozenset[int]
    doc_id: str = ""


@dataclass
class TrainConfig:
    lr: float = 5e-5
    batch_size: int = 64
    epochs: int = 20
    seed: int = 42
    weight_decay: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


def build_targets_core(core: set[int], t: Taxonomy) -> TargetSets:
    """Positives: core classes plus ancestors. Unlabeled: their descendants."""
    if not core:
        raise TeleclassError("cannot build targets from an empty core set")
    positives: set[int] = set()
    below: set[int] = set()
    for c in core:
        positives.add(c)
        positives.update(t.ancestors(c))
        below.update(t.descendants(c))
    universe = set(t.class_ids())
    positives &= universe
    unlabeled = (below & universe) - positives
    negatives = universe - positives - unlabeled
    return TargetSets(
        positives=frozenset(positives),
        negatives=frozenset(negatives),
        unlabeled=frozenset(unlabeled),
    )


def build_targets_gen(path: LabelPath, t: Taxonomy) -> TargetSets:
    """Path classes are positive, every other class negative."""
    positives = frozenset(path.nodes)
    universe = set(t.class_ids())
    return TargetSets(
        positives=positives,
        negatives=frozenset(universe - positives),
        unlabeled=frozenset(),
    )


def _fit_rows(rows: np.ndarray, dim: int) -> np.ndarray:
    """Truncate or zero-pad row vectors to the requested width."""
    n, d = rows.shape
    if d == dim:
        return rows.copy()
    if d > dim:
        return rows[:, :dim].copy()
    out = np.zeros((n, dim))
    out[:, :d] = rows
    return out


class MatchingModel:
    """Bilinear scorer p(class | doc) over frozen document embeddings."""

    def __init__(
        self,
        dim_in: int,
        dim_h: int,
        class_ids: list[int],
        W: np.ndarray,
        class_table: np.ndarray,
        adapter: np.ndarray,
        score_form: str = "sigmoid_linear",
        loss_history: list[float] | None = None,
    ):
        if score_form not in SCORE_FORMS:
            raise TeleclassError(f"unknown score form {score_form!r}")
        self.dim_in = dim_in
        self.dim_h = dim_h
        self.class_ids = list(class_ids)
        self.class_row = {c: i for i, c in enumerate(self.class_ids)}
        self.W = np.asarray(W, dtype=np.float64)
        self.class_table = np.asarray(class_table, dtype=np.float64)
        self.adapter = np.asarray(adapter, dtype=np.float64)
        self.score_form = score_form
        self.loss_history = loss_history or []
        if self.W.shape != (dim_h, dim_h):
            raise TeleclassError(f"W must be {(dim_h, dim_h)}, got {self.W.shape}")
        if self.class_table.shape != (len(self.class_ids), dim_h):
            raise TeleclassError("class table shape mismatch")
        if self.adapter.shape != (dim_h, dim_in):
            raise TeleclassError("adapter shape mismatch")

    @classmethod
    def init_from_names(
        cls,
        t: Taxonomy,
        store: VectorStore,
        dim_h: int | None = None,
        score_form: str = "sigmoid_linear",
    ) -> "MatchingModel":
        """Class rows start at the class-name embeddings; W and adapter at identity."""
        class_ids = t.class_ids()
        names = np.stack([store.name(t.names[c]) for c in class_ids])
        dim_in = names.shape[1]
        dim_h = dim_h or dim_in
        class_table = _fit_rows(names, dim_h)
        adapter = _fit_rows(np.eye(dim_in), dim_h)
        return cls(
            dim_in=dim_in,
            dim_h=dim_h,
            class_ids=class_ids,
            W=np.eye(dim_h),
            class_table=class_table,
            adapter=adapter,
            score_form=score_form,
        )

    # -- forward --------------------------------------------------------

    def logits(self, doc_matrix: np.ndarray) -> np.ndarray:
        """(n, dim_in) -> (n, n_classes) bilinear scores."""
        if doc_matrix.shape[1] != self.dim_in:
            raise TeleclassError(
                f"document vectors have dim {doc_matrix.shape[1]}, model wants {self.dim_in}"
            )
        projected = doc_matrix @ self.adapter.T
        return projected @ self.W.T @ self.class_table.T

    def probabilities(self, doc_matrix: np.ndarray) -> np.ndarray:
        z = self.logits(doc_matrix)
        if self.score_form == "sigmoid_exp":
            z = np.exp(np.minimum(z, 500.0))
        return 1.0 / (1.0 + np.exp(-z))

    def predict_proba(self, doc_vector: np.ndarray) -> list[tuple[int, float]]:
        doc_vector = np.asarray(doc_vector, dtype=np.float64)
        if doc_vector.ndim != 1 or doc_vector.shape[0] != self.dim_in:
            raise TeleclassError(
                f"document vector has shape {doc_vector.shape}, model wants ({self.dim_in},)"
            )
        probs = self.probabilities(doc_vector.reshape(1, -1))[0]
        return [(c, float(probs[i])) for i, c in enumerate(self.class_ids)]

    def predict(
        self, doc_vector: np.ndarray, threshold: float = 0.5, names: dict[int, str] | None = None
    ) -> tuple[list[tuple[int, float]], set[int]]:
        """Full ranking (probability desc, name/id tie-break) plus thresholded set."""
        scored = self.predict_proba(doc_vector)
        if names:
            scored.sort(key=lambda cp: (-cp[1], names[cp[0]]))
        else:
            scored.sort(key=lambda cp: (-cp[1], cp[0]))
        predicted = {c for c, p in scored if p > threshold}
        return scored, predicted

    # -- persistence ------------------------------------------------------

    def to_json(self, train_config: dict | None = None) -> str:
        return json.dumps(
            {
                "dim_in": self.dim_in,
                "dim_h": self.dim_h,
                "score_form": self.score_form,
                "class_ids": self.class_ids,
                "W": self.W.ravel().tolist(),
                "class_table": self.class_table.ravel().tolist(),
                "adapter": self.adapter.ravel().tolist(),
                "train_config": train_config or {},
                "loss_history": self.loss_history,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, source: str) -> "MatchingModel":
        data = json.loads(source)
        dim_in, dim_h = data["dim_in"], data["dim_h"]
        n = len(data["class_ids"])
        return cls(
            dim_in=dim_in,
            dim_h=dim_h,
            class_ids=data["class_ids"],
            W=np.array(data["W"]).reshape(dim_h, dim_h),
            class_table=np.array(data["class_table"]).reshape(n, dim_h),
            adapter=np.array(data["adapter"]).reshape(dim_h, dim_in),
            score_form=data["score_form"],
            loss_history=list(data.get("loss_history", [])),
        )


def _assemble(
    model: MatchingModel,
    items: list[tuple[np.ndarray, TargetSets]],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack (doc vector, targets) pairs into X, Y, and the loss mask."""
    n, c = len(items), len(model.class_ids)
    X = np.zeros((n, model.dim_in))
    Y = np.zeros((n, c))
    M = np.zeros((n, c))
    universe = set(model.class_ids)
    for i, (vec, targets) in enumerate(items):
        combined = targets.positives | targets.negatives | targets.unlabeled
        if targets.positives & targets.negatives or combined != universe:
            raise TeleclassError(
                f"target sets do not partition the classes for doc {targets.doc_id!r}"
            )
        X[i] = vec
        for cid in targets.positives:
            Y[i, model.class_row[cid]] = 1.0
            M[i, model.class_row[cid]] = 1.0
        for cid in targets.negatives:
            M[i, model.class_row[cid]] = 1.0
    return X, Y, M


def loss_and_grads(
    model: MatchingModel,
    core_items: list[tuple[np.ndarray, TargetSets]],
    gen_items: list[tuple[np.ndarray, TargetSets]],
    gen_weight: float | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Summed BCE over both document sets plus exact analytic gradients.

    The generated-set term is weighted by len(core)/len(gen) unless an
    explicit weight is given. Either set may be empty (its term drops).
    """
    if not core_items and not gen_items:
        raise TeleclassError("loss needs at least one non-empty batch")
    if gen_weight is None:
        gen_weight = (len(core_items) / len(gen_items)) if core_items and gen_items else 1.0
    parts = []
    if core_items:
        X, Y, M = _assemble(model, core_items)
        parts.append((X, Y, M, 1.0))
    if gen_items:
        X, Y, M = _assemble(model, gen_items)
        parts.append((X, Y, M, gen_weight))
    X = np.concatenate([p[0] for p in parts])
    Y = np.concatenate([p[1] for p in parts])
    M = np.concatenate([p[2] for p in parts])
    w = np.concatenate([np.full(p[0].shape[0], p[3]) for p in parts])
    doc_ids = [ts.doc_id or "?" for _, ts in list(core_items) + list(gen_items)]
    return _loss_and_grads_arrays(model, X, Y, M, w, doc_ids)


def _loss_and_grads_arrays(
    model: MatchingModel,
    X: np.ndarray,
    Y: np.ndarray,
    M: np.ndarray,
    w: np.ndarray,
    doc_ids: list[str] | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    projected = X @ model.adapter.T
    Z = projected @ model.W.T @ model.class_table.T
    exp_form = model.score_form == "sigmoid_exp"
    loss, G = kernels.masked_bce(Z, Y, M, w, exp_form)
    if not np.isfinite(loss):
        for i in range(X.shape[0]):  # locate the offender for the error message
            row_loss, _ = kernels.masked_bce(
                Z[i : i + 1], Y[i : i + 1], M[i : i + 1], w[i : i + 1], exp_form
            )
            if not np.isfinite(row_loss):
                who = doc_ids[i] if doc_ids else f"batch row {i}"
                raise TeleclassError(f"non-finite loss ({row_loss!r}) at doc {who}")
        raise TeleclassError(f"non-finite loss {loss!r}")
    grad_table = G.T @ (projected @ model.W.T)
    grad_W = model.class_table.T @ G.T @ projected
    grad_projected = G @ model.class_table @ model.W
    grad_adapter = grad_projected.T @ X
    return float(loss), {
        "W": grad_W,
        "class_table": grad_table,
        "adapter": grad_adapter,
    }


class _AdamW:
    """Decoupled-weight-decay adaptive-moment updates, one state per block."""

    def __init__(self, params: dict[str, np.ndarray], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.step_no = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        c = self.cfg
        self.step_no += 1
        bc1 = 1.0 - c.adam_beta1**self.step_no
        bc2 = 1.0 - c.adam_beta2**self.step_no
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = c.adam_beta1 * self.m[k] + (1.0 - c.adam_beta1) * g
            self.v[k] = c.adam_beta2 * self.v[k] + (1.0 - c.adam_beta2) * g * g
            update = (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.adam_eps)
            p -= c.lr * (update + c.weight_decay * p)


def train(
    model: MatchingModel,
    core_items: list[tuple[np.ndarray, TargetSets]],
    gen_items: list[tuple[np.ndarray, TargetSets]],
    cfg: TrainConfig,
) -> MatchingModel:
    """Mini-batch training over the merged core and generated sets.

    Deterministic given the seed. The per-epoch summed loss lands in
    model.loss_history; non-finite values abort with the epoch and step.
    """
    if not core_items and not gen_items:
        raise TeleclassError("nothing to train on")
    gen_weight = (len(core_items) / len(gen_items)) if core_items and gen_items else 1.0
    X_parts, Y_parts, M_parts, w_parts = [], [], [], []
    if core_items:
        X, Y, M = _assemble(model, core_items)
        X_parts.append(X)
        Y_parts.append(Y)
        M_parts.append(M)
        w_parts.append(np.ones(X.shape[0]))
    if gen_items:
        X, Y, M = _assemble(model, gen_items)
        X_parts.append(X)
        Y_parts.append(Y)
        M_parts.append(M)
        w_parts.append(np.full(X.shape[0], gen_weight))
    X = np.concatenate(X_parts)
    Y = np.concatenate(Y_parts)
    M = np.concatenate(M_parts)
    w = np.concatenate(w_parts)

    params = {"W": model.W, "class_table": model.class_table, "adapter": model.adapter}
    opt = _AdamW(params, cfg)
    rng = np.random.default_rng(cfg.seed)
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            try:
                loss, grads = _loss_and_grads_arrays(model, X[idx], Y[idx], M[idx], w[idx])
            except TeleclassError as e:
                raise TeleclassError(
                    f"training aborted at epoch {epoch}, step {start // cfg.batch_size}: {e}"
                ) from e
            opt.step(grads)
            epoch_loss += loss
        for name, p in params.items():
            if not np.isfinite(p).all():
                raise TeleclassError(
                    f"non-finite parameters in {name} after epoch {epoch}"
                )
        model.loss_history.append(epoch_loss)
    return model
