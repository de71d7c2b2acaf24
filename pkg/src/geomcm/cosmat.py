"""Cross-modal semantic matching.

Text and image features are first projected onto maximally correlated
subspaces (canonical correlation analysis), then each subspace is mapped to a
posterior distribution over a shared set of concept classes by a multinomial
logistic regression. Both modalities land in the same probability simplex, so
a text and an image can be compared by cosine similarity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .model import FeatureVector, Modality, SemanticVector

FORMAT_VERSION = 1

POWER_TOL = 1e-10
POWER_MAX_ITERS = 10_000


class SingularCovarianceError(ValueError):
    pass


class DegenerateTrainingError(ValueError):
    pass


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CorrProjModel:
    text_directions: np.ndarray   # gamma x d_T
    image_directions: np.ndarray  # gamma x d_I
    correlations: np.ndarray
    text_mean: np.ndarray
    image_mean: np.ndarray

    def __post_init__(self):
        for name in ("text_directions", "image_directions", "correlations", "text_mean", "image_mean"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def gamma(self) -> int:
        return self.text_directions.shape[0]

    @property
    def d_text(self) -> int:
        return self.text_directions.shape[1]

    @property
    def d_image(self) -> int:
        return self.image_directions.shape[1]


@dataclass(frozen=True, eq=False)
class LogsTranModel:
    weights: np.ndarray  # class_count x (gamma + 1), last column is the bias

    def __post_init__(self):
        object.__setattr__(self, "weights", _readonly(self.weights))

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1] - 1


@dataclass(frozen=True, eq=False)
class SemanticSpaceModel:
    corr_proj: CorrProjModel
    text_logs_tran: LogsTranModel
    image_logs_tran: LogsTranModel
    concept_names: Optional[tuple] = None

    def __post_init__(self):
        if self.text_logs_tran.class_count != self.image_logs_tran.class_count:
            raise ValueError("text and image transforms must share the class set")
        for lt in (self.text_logs_tran, self.image_logs_tran):
            if lt.input_dim != self.corr_proj.gamma:
                raise ValueError("logistic transform input size must equal gamma")
        if self.concept_names is not None:
            names = tuple(self.concept_names)
            if len(names) != self.class_count:
                raise ValueError("one concept name per class required")
            object.__setattr__(self, "concept_names", names)

    @property
    def class_count(self) -> int:
        return self.text_logs_tran.class_count


# --------------------------------------------------------------------------
# Canonical correlation projection


def _default_ridge(cov: np.ndarray) -> float:
    return 1e-6 * float(np.trace(cov)) / cov.shape[0]


def _inv_cholesky_factor(cov: np.ndarray, which: str) -> np.ndarray:
    """Return W with W @ cov @ W.T = I (W = L^-1 for cov = L L^T)."""
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError(f"{which} covariance is singular; increase ridge") from None
    diag = np.abs(np.diag(L))
    if diag.min() <= 1e-12 * max(diag.max(), 1e-300):
        raise SingularCovarianceError(f"{which} covariance is numerically singular; increase ridge")
    return np.linalg.solve(L, np.eye(cov.shape[0]))


def _start_vector(d: int, index: int) -> np.ndarray:
    v = np.ones(d) + 0.01 * np.cos(np.arange(d) * (1.0 + index))
    return v / np.linalg.norm(v)


def _orthogonalize(v: np.ndarray, basis: list) -> np.ndarray:
    for b in basis:
        v = v - (b @ v) * b
    return v


def _unit_complement(d: int, basis: list) -> np.ndarray:
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        e = _orthogonalize(_orthogonalize(e, basis), basis)
        n = np.linalg.norm(e)
        if n > 1e-8:
            return e / n
    raise ValueError("no orthogonal complement left")


def top_eigenpairs(A: np.ndarray, count: int, tol: float = POWER_TOL, max_iters: int = POWER_MAX_ITERS):
    """Leading eigenpairs of a symmetric PSD matrix by deflated power iteration."""
    d = A.shape[0]
    A = (A + A.T) / 2.0
    values, vectors = [], []
    for i in range(count):
        v = _orthogonalize(_start_vector(d, i), vectors)
        n = np.linalg.norm(v)
        v = v / n if n > 1e-12 else _unit_complement(d, vectors)
        lam = 0.0
        for _ in range(max_iters):
            w = _orthogonalize(A @ v, vectors)
            n = np.linalg.norm(w)
            if n < 1e-300:
                # remaining spectrum is zero
                lam = 0.0
                break
            w /= n
            delta = np.abs(w - v).max()
            v = w
            if delta < tol:
                break
        lam = float(v @ A @ v)
        values.append(max(lam, 0.0))
        vectors.append(v)
    return np.array(values), np.array(vectors)


def fit_corr_proj(text_features, image_features, gamma: int, ridge: Optional[float] = None) -> CorrProjModel:
    """Fit paired text/image canonical directions.

    ``ridge`` is added to both covariance diagonals before inversion; ``None``
    uses ``1e-6 * trace(cov) / d`` separately per modality, which keeps the
    fit invariant to rescaling either modality.
    """
    X = np.asarray(text_features, dtype=np.float64)
    Y = np.asarray(image_features, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2:
        raise ValueError("feature matrices must be 2-D")
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"paired matrices differ in rows: {X.shape[0]} vs {Y.shape[0]}")
    n, dt = X.shape
    di = Y.shape[1]
    if n < 2:
        raise ValueError("need at least two paired samples")
    if not 1 <= gamma <= min(dt, di):
        raise ValueError(f"gamma must lie in [1, {min(dt, di)}], got {gamma}")
    if ridge is not None and ridge < 0:
        raise ValueError("ridge must be >= 0")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("non-finite feature values")

    mx, my = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - mx, Y - my
    Stt = Xc.T @ Xc / (n - 1)
    Sii = Yc.T @ Yc / (n - 1)
    Sti = Xc.T @ Yc / (n - 1)
    rt = _default_ridge(Stt) if ridge is None else ridge
    ri = _default_ridge(Sii) if ridge is None else ridge
    Stt = Stt + rt * np.eye(dt)
    Sii = Sii + ri * np.eye(di)

    Wt = _inv_cholesky_factor(Stt, "text")
    Wi = _inv_cholesky_factor(Sii, "image")
    K = Wt @ Sti @ Wi.T  # whitened cross-covariance
    lams, U = top_eigenpairs(K @ K.T, gamma)
    rhos = np.sqrt(lams)

    text_dirs, image_dirs, v_basis = [], [], []
    for rho, u in zip(rhos, U):
        v = K.T @ u
        nv = np.linalg.norm(v)
        if rho > 1e-12 and nv > 1e-12:
            v = _orthogonalize(v / nv, v_basis)
            v /= np.linalg.norm(v)
        else:
            v = _unit_complement(di, v_basis)
        v_basis.append(v)
        a = Wt.T @ u
        b = Wi.T @ v
        # deterministic sign: largest-magnitude text component positive
        if a[np.argmax(np.abs(a))] < 0:
            a, b = -a, -b
        text_dirs.append(a)
        image_dirs.append(b)

    corr = np.clip(rhos, 0.0, 1.0)
    # power iteration returns values in order up to round-off; enforce it
    corr = np.minimum.accumulate(corr)
    return CorrProjModel(np.array(text_dirs), np.array(image_dirs), corr, mx, my)


def _project(directions: np.ndarray, mean: np.ndarray, values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.shape[-1] != mean.shape[0]:
        raise ValueError(f"feature dimension {v.shape[-1]} != model dimension {mean.shape[0]}")
    return (v - mean) @ directions.T


def _values(feature, modality: Modality) -> np.ndarray:
    if isinstance(feature, FeatureVector):
        if feature.modality is not modality:
            raise ValueError(f"expected a {modality.name.lower()} feature, got {feature.modality.name.lower()}")
        return feature.values
    return np.asarray(feature, dtype=np.float64)


def project_text(model: CorrProjModel, feature) -> np.ndarray:
    """Map text features (one vector or an n x d_T matrix) into the text subspace."""
    return _project(model.text_directions, model.text_mean, _values(feature, Modality.TEXT))


def project_image(model: CorrProjModel, feature) -> np.ndarray:
    return _project(model.image_directions, model.image_mean, _values(feature, Modality.IMAGE))


# --------------------------------------------------------------------------
# Logistic transform


def _augment(Z: np.ndarray) -> np.ndarray:
    return np.hstack([Z, np.ones((Z.shape[0], 1))])


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def logistic_loss(weights: np.ndarray, Xa: np.ndarray, labels: np.ndarray, l2: float) -> float:
    """Mean cross-entropy plus ``l2/2 * ||W||^2`` over the non-bias columns."""
    logp = _log_softmax(Xa @ weights.T)
    ce = -logp[np.arange(len(labels)), labels].mean()
    return float(ce + 0.5 * l2 * np.sum(weights[:, :-1] ** 2))


def logistic_gradient(weights: np.ndarray, Xa: np.ndarray, labels: np.ndarray, l2: float) -> np.ndarray:
    p = softmax(Xa @ weights.T)
    p[np.arange(len(labels)), labels] -= 1.0
    g = p.T @ Xa / len(labels)
    g[:, :-1] += l2 * weights[:, :-1]
    return g


@dataclass
class FitTrace:
    losses: list
    iterations: int
    converged: bool


def fit_logs_tran(
    projected,
    labels,
    class_count: int,
    l2: float = 1e-4,
    max_iters: int = 5000,
    tol: float = 1e-6,
    trace: Optional[FitTrace] = None,
) -> LogsTranModel:
    """Full-batch gradient descent with Armijo backtracking from zero weights."""
    Z = np.asarray(projected, dtype=np.float64)
    y = np.asarray(labels)
    if Z.ndim != 2 or Z.shape[0] != y.shape[0]:
        raise ValueError("projected must be n x gamma with one label per row")
    if class_count < 2:
        raise ValueError("need at least two classes")
    if Z.shape[0] < class_count:
        raise ValueError("need at least as many samples as classes")
    if l2 < 0:
        raise ValueError("l2 must be >= 0")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(y == np.round(y)):
            raise ValueError("labels must be integers")
        y = y.astype(np.int64)
    bad = (y < 0) | (y >= class_count)
    if bad.any():
        raise ValueError(f"label {int(y[bad][0])} outside [0, {class_count})")
    counts = np.bincount(y, minlength=class_count)
    if (counts == 0).any():
        raise DegenerateTrainingError(f"class {int(np.argmin(counts))} has no training examples")

    Xa = _augment(Z)
    W = np.zeros((class_count, Xa.shape[1]))
    loss = logistic_loss(W, Xa, y, l2)
    losses = [loss]
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        g = logistic_gradient(W, Xa, y, l2)
        if np.abs(g).max() < tol:
            converged = True
            it -= 1
            break
        gg = float(np.sum(g * g))
        t = min(1.0, 2.0 * step)
        while True:
            W_new = W - t * g
            new_loss = logistic_loss(W_new, Xa, y, l2)
            if new_loss <= loss - 1e-4 * t * gg:
                break
            t *= 0.5
            if t < 1e-20:
                break
        if t < 1e-20:
            # no descent possible at machine precision
            converged = True
            break
        W, loss, step = W_new, new_loss, t
        losses.append(loss)
    if trace is not None:
        trace.losses = losses
        trace.iterations = it
        trace.converged = converged
    return LogsTranModel(W)


def to_semantic(model: LogsTranModel, projected) -> SemanticVector:
    z = np.asarray(projected, dtype=np.float64).reshape(-1)
    if z.shape[0] != model.input_dim:
        raise ValueError(f"projected length {z.shape[0]} != gamma {model.input_dim}")
    logits = model.weights[:, :-1] @ z + model.weights[:, -1]
    return SemanticVector(softmax(logits))


def to_semantic_many(model: LogsTranModel, projected: np.ndarray) -> np.ndarray:
    Z = np.asarray(projected, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] != model.input_dim:
        raise ValueError("projected must be n x gamma")
    return softmax(Z @ model.weights[:, :-1].T + model.weights[:, -1])


def embed_text(space: SemanticSpaceModel, feature) -> SemanticVector:
    return to_semantic(space.text_logs_tran, project_text(space.corr_proj, feature))


def embed_image(space: SemanticSpaceModel, feature) -> SemanticVector:
    return to_semantic(space.image_logs_tran, project_image(space.corr_proj, feature))


def embed_many(space: SemanticSpaceModel, features: np.ndarray, modality: Modality) -> np.ndarray:
    """Batch embedding; row i equals the single-vector embedding of row i."""
    features = np.asarray(features, dtype=np.float64)
    if Modality(modality) is Modality.TEXT:
        return to_semantic_many(space.text_logs_tran, project_text(space.corr_proj, features))
    return to_semantic_many(space.image_logs_tran, project_image(space.corr_proj, features))


def cosine_similarity(a, b) -> float:
    a = a.probabilities if isinstance(a, SemanticVector) else np.asarray(a, dtype=np.float64)
    b = b.probabilities if isinstance(b, SemanticVector) else np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    na = math.sqrt(float(a @ a))
    nb = math.sqrt(float(b @ b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity of a zero vector")
    return float(a @ b) / (na * nb)


# --------------------------------------------------------------------------
# Training pipeline and persistence


def fit_semantic_space(
    text_features,
    image_features,
    labels,
    class_count: int,
    gamma: int,
    ridge: Optional[float] = None,
    l2: float = 1e-4,
    max_iters: int = 5000,
    tol: float = 1e-6,
    concept_names: Optional[Sequence[str]] = None,
) -> SemanticSpaceModel:
    """Fit the projection on paired rows, then one logistic transform per modality.

    Both transforms use the same label indexing, which is what makes their
    outputs comparable.
    """
    cp = fit_corr_proj(text_features, image_features, gamma, ridge)
    zt = project_text(cp, np.asarray(text_features, dtype=np.float64))
    zi = project_image(cp, np.asarray(image_features, dtype=np.float64))
    lt = fit_logs_tran(zt, labels, class_count, l2, max_iters, tol)
    li = fit_logs_tran(zi, labels, class_count, l2, max_iters, tol)
    return SemanticSpaceModel(cp, lt, li, tuple(concept_names) if concept_names else None)


def space_to_dict(space: SemanticSpaceModel) -> dict:
    cp = space.corr_proj
    return {
        "format": "geomcm-semantic-space",
        "version": FORMAT_VERSION,
        "d_text": cp.d_text,
        "d_image": cp.d_image,
        "gamma": cp.gamma,
        "class_count": space.class_count,
        "text_mean": cp.text_mean.tolist(),
        "image_mean": cp.image_mean.tolist(),
        "text_directions": cp.text_directions.tolist(),
        "image_directions": cp.image_directions.tolist(),
        "correlations": cp.correlations.tolist(),
        "text_weights": space.text_logs_tran.weights.tolist(),
        "image_weights": space.image_logs_tran.weights.tolist(),
        "concept_names": list(space.concept_names) if space.concept_names else None,
    }


def space_from_dict(d: dict) -> SemanticSpaceModel:
    if d.get("format") != "geomcm-semantic-space":
        raise ValueError("not a semantic space record")
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    g = d["gamma"]
    cp = CorrProjModel(
        np.array(d["text_directions"]).reshape(g, d["d_text"]),
        np.array(d["image_directions"]).reshape(g, d["d_image"]),
        d["correlations"], d["text_mean"], d["image_mean"],
    )
    c = d["class_count"]
    return SemanticSpaceModel(
        cp,
        LogsTranModel(np.array(d["text_weights"]).reshape(c, g + 1)),
        LogsTranModel(np.array(d["image_weights"]).reshape(c, g + 1)),
        d.get("concept_names"),
    )


def save_space(space: SemanticSpaceModel, path) -> None:
    # json writes floats with repr(), which round-trips float64 exactly
    Path(path).write_text(json.dumps(space_to_dict(space)))


def load_space(path) -> SemanticSpaceModel:
    return space_from_dict(json.loads(Path(path).read_text()))
