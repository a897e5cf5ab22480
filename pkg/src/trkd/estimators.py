"""Teacher and student embedding classifiers with a scikit-learn interface.

Both estimators map inputs through an :class:`~trkd.network.Mlp` to an
embedding and score it against a cosine classification head trained with
AAM-softmax. ``transform`` returns embeddings, ``decision_function`` the
margin-free logits ``scale * cos``, which is also what the student distils.
"""
import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .aux_losses import _normalize_backward, aam_from_cosines, cos_embed_loss, mse_embed_loss, normalize_rows
from .exceptions import DivergenceError, InvalidParameterError
from .io import Checkpoint
from .losses import DistillWeights, kd_loss, nckd_loss, tckd_loss, trkd_components
from .network import LrSchedule, Mlp, MlpSpec, sgd_step
from .prob import log_softmax
from .schedule import TauSchedule

__all__ = ["AamTeacher", "DistilledStudent", "METHODS"]

METHODS = ("none", "kd", "dkd", "trkd", "mse", "cos")


class _CosineEmbedder(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Shared model, inference and training loop."""

    def _validate_train_params(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidParameterError("epochs and batch_size must be >= 1")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise InvalidParameterError("warmup_epochs must lie in [0, epochs)")
        if not 0 <= self.momentum < 1:
            raise InvalidParameterError("momentum must lie in [0, 1)")

    def _build(self, n_features, n_classes, rng):
        spec = MlpSpec((n_features, *self.hidden_layer_sizes, self.embedding_dim))
        self.net_ = Mlp.init(spec, rng)
        self.class_weights_ = rng.standard_normal((n_classes, self.embedding_dim))

    def _train(self, X, y, rng, hook=None):
        """Minibatch SGD on ``AAM + hook`` losses.

        ``hook(k, idx, E, logits)`` returns ``(record, d_logits, d_E, extra_grads)``
        for the auxiliary objective on batch rows ``idx``; ``record["_distill"]``
        carries its loss value and ``extra_grads`` line up with
        :meth:`_extra_params`.
        """
        n = X.shape[0]
        steps_per_epoch = math.ceil(n / self.batch_size)
        total = self.epochs * steps_per_epoch
        self.lr_schedule_ = LrSchedule(
            self.lr_peak, self.lr_final, int(round(self.warmup_epochs * steps_per_epoch)), total
        )
        self.n_steps_ = total
        params = self.net_.params + [self.class_weights_] + list(self._extra_params())
        velocity = [np.zeros_like(p) for p in params]
        log, history = [], []
        k = 0
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(self.epochs):
                order = rng.permutation(n)
                loss_sum, correct = 0.0, 0
                for start in range(0, n, self.batch_size):
                    idx = order[start:start + self.batch_size]
                    lr = self.lr_schedule_(k)
                    E = self.net_.forward(X[idx])
                    unit_e = normalize_rows(E)
                    unit_w = normalize_rows(self.class_weights_)
                    cos = unit_e @ unit_w.T
                    aam, dcos = aam_from_cosines(cos, y[idx], self.scale, self.margin)
                    rec = {"step": k, "epoch": epoch, "lr": lr}
                    total_loss = aam
                    dE = 0.0
                    extra = []
                    # non-finite cosines mean the AAM term is already nan; the
                    # divergence check below reports it
                    if hook is not None and np.all(np.isfinite(cos)):
                        hrec, d_logits, d_E, extra = hook(k, idx, E, self.scale * cos)
                        total_loss = total_loss + hrec.pop("_distill")
                        rec.update(hrec)
                        if d_logits is not None:
                            dcos = dcos + self.scale * d_logits
                        if d_E is not None:
                            dE = d_E
                    rec["loss_total"] = total_loss
                    rec["loss_aam"] = aam
                    log.append(_order_record(rec))
                    if not np.isfinite(total_loss):
                        self.log_ = log
                        raise DivergenceError(k, log)
                    dE = dE + _normalize_backward(E, unit_e, dcos @ unit_w)
                    dW = _normalize_backward(self.class_weights_, unit_w, dcos.T @ unit_e)
                    grads = self.net_.backward(dE) + [dW] + list(extra)
                    sgd_step(params, grads, velocity, lr, self.momentum)
                    loss_sum += total_loss * len(idx)
                    correct += int(np.sum(np.argmax(cos, axis=1) == y[idx]))
                    k += 1
                history.append({"epoch": epoch, "loss": loss_sum / n, "accuracy": correct / n})
        self.log_ = log
        self.history_ = history
        return self

    def _extra_params(self):
        return ()

    def _encode(self, y):
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if self.classes_.size < 2:
            raise InvalidParameterError("need at least two classes")
        return y_enc

    def transform(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        return self.net_.forward(X, cache=False)

    def decision_function(self, X):
        return self.scale * normalize_rows(self.transform(X)) @ normalize_rows(self.class_weights_).T

    def predict_log_proba(self, X):
        return log_softmax(self.decision_function(X))

    def predict_proba(self, X):
        return np.exp(self.predict_log_proba(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]

    def to_checkpoint(self):
        check_is_fitted(self, "net_")
        return Checkpoint(self.net_.copy(), self.class_weights_.copy())

    @classmethod
    def from_checkpoint(cls, ckpt, **params):
        """Rebuild a fitted estimator; classes are ``0 .. C-1``."""
        est = cls(**params)
        widths = ckpt.net.widths
        est.hidden_layer_sizes = tuple(widths[1:-1])
        est.embedding_dim = widths[-1]
        est.net_ = ckpt.net
        est.class_weights_ = np.asarray(ckpt.class_weights, dtype=np.float64)
        est.classes_ = np.arange(est.class_weights_.shape[0])
        est.n_features_in_ = widths[0]
        return est


def _order_record(rec):
    head = ("step", "epoch", "lr", "tau", "loss_total", "loss_aam")
    out = {key: rec[key] for key in head if key in rec}
    out.update({key: val for key, val in rec.items() if key not in out})
    return out


class AamTeacher(_CosineEmbedder):
    """Embedding network trained with AAM-softmax only.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int
    embedding_dim : int
    scale, margin : float
        AAM-softmax scale ``s`` and additive angular margin ``m``.
    epochs, batch_size : int
    lr_peak, lr_final : float
        Learning rate after warm-up and at the last step.
    warmup_epochs : float
        Length of the linear warm-up, in (possibly fractional) epochs.
    momentum : float
    random_state : int
    """

    def __init__(self, hidden_layer_sizes=(256, 256), embedding_dim=64, scale=32.0, margin=0.2,
                 epochs=30, batch_size=64, lr_peak=0.1, lr_final=5e-5, warmup_epochs=1.2,
                 momentum=0.9, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.embedding_dim = embedding_dim
        self.scale = scale
        self.margin = margin
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_peak = lr_peak
        self.lr_final = lr_final
        self.warmup_epochs = warmup_epochs
        self.momentum = momentum
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self._validate_train_params()
        y_enc = self._encode(y)
        rng = np.random.default_rng(self.random_state)
        self._build(X.shape[1], self.classes_.size, rng)
        self.n_features_in_ = X.shape[1]
        return self._train(X, y_enc, rng)


class DistilledStudent(_CosineEmbedder):
    """Student embedding network distilled from a fitted, frozen teacher.

    ``method`` selects the objective added to AAM-softmax:

    ``none``  no distillation
    ``kd``    KL between temperature-softened posteriors
    ``dkd``   ``alpha * TCKD + beta * NCKD``
    ``trkd``  ``lambda_m * TMKD + lambda_f * CFKD`` with a tau curriculum
    ``mse``, ``cos``  embedding matching through a learned linear projection

    The tau window starts and stops at fractions ``tau_start``/``tau_stop``
    of the total number of optimizer steps, or at the absolute steps
    ``tau_steps = (k_start, k_stop)`` when given. ``tau_fixed`` replaces the
    curriculum by a constant cutoff.
    """

    def __init__(self, teacher=None, method="trkd", hidden_layer_sizes=(64,), embedding_dim=32,
                 scale=32.0, margin=0.2, epochs=30, batch_size=64, lr_peak=0.1, lr_final=5e-5,
                 warmup_epochs=1.2, momentum=0.9, temperature=4.0, alpha=1.0, beta=8.0,
                 lambda_m=1.0, lambda_f=8.0, rescale=True, tau_init=1.0, tau_final=0.05,
                 gamma=0.001, tau_start=1 / 15, tau_stop=2 / 5, tau_steps=None, tau_fixed=None,
                 random_state=0):
        self.teacher = teacher
        self.method = method
        self.hidden_layer_sizes = hidden_layer_sizes
        self.embedding_dim = embedding_dim
        self.scale = scale
        self.margin = margin
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_peak = lr_peak
        self.lr_final = lr_final
        self.warmup_epochs = warmup_epochs
        self.momentum = momentum
        self.temperature = temperature
        self.alpha = alpha
        self.beta = beta
        self.lambda_m = lambda_m
        self.lambda_f = lambda_f
        self.rescale = rescale
        self.tau_init = tau_init
        self.tau_final = tau_final
        self.gamma = gamma
        self.tau_start = tau_start
        self.tau_stop = tau_stop
        self.tau_steps = tau_steps
        self.tau_fixed = tau_fixed
        self.random_state = random_state

    @property
    def distill_weights(self):
        return DistillWeights(self.alpha, self.beta, self.lambda_m, self.lambda_f,
                              self.temperature, self.rescale)

    def _extra_params(self):
        return (self.projection_,) if self.method in ("mse", "cos") else ()

    def tau_schedule(self, total_steps):
        if self.tau_fixed is not None:
            return TauSchedule.constant(self.tau_fixed)
        if self.tau_steps is not None:
            k_start, k_stop = self.tau_steps
            return TauSchedule(self.tau_init, self.tau_final, self.gamma, k_start, k_stop)
        return TauSchedule.from_fractions(total_steps, self.tau_start, self.tau_stop,
                                          self.tau_init, self.tau_final, self.gamma)

    def fit(self, X, y):
        if self.method not in METHODS:
            raise InvalidParameterError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.teacher is None:
            raise InvalidParameterError("a fitted teacher is required")
        check_is_fitted(self.teacher, "net_")
        X, y = check_X_y(X, y, dtype=np.float64)
        self._validate_train_params()
        self.classes_ = self.teacher.classes_
        if not np.all(np.isin(y, self.classes_)):
            raise InvalidParameterError("training labels unknown to the teacher")
        y_enc = np.searchsorted(self.classes_, y)
        rng = np.random.default_rng(self.random_state)
        self._build(X.shape[1], self.classes_.size, rng)
        self.n_features_in_ = X.shape[1]

        hook = None
        if self.method in ("kd", "dkd", "trkd"):
            hook = self._logit_hook(self.teacher.decision_function(X), y_enc, X.shape[0])
        elif self.method in ("mse", "cos"):
            t_emb = normalize_rows(self.teacher.transform(X))
            bound = np.sqrt(6.0 / self.embedding_dim)
            self.projection_ = rng.uniform(-bound, bound, size=(self.embedding_dim, t_emb.shape[1]))
            hook = self._embedding_hook(t_emb)
        return self._train(X, y_enc, rng, hook)

    def _logit_hook(self, teacher_logits, y, n):
        w = self.distill_weights
        method = self.method
        steps = self.epochs * math.ceil(n / self.batch_size)
        sched = self.tau_schedule(steps) if method == "trkd" else None
        self.tau_schedule_ = sched

        def hook(k, idx, E, logits):
            tl, yb = teacher_logits[idx], y[idx]
            rec = {}
            if method == "kd":
                res = kd_loss(tl, logits, w)
                rec["loss_kd"] = res.value
            elif method == "dkd":
                first, second = tckd_loss(tl, logits, yb, w), nckd_loss(tl, logits, yb, w)
                rec["loss_tckd"], rec["loss_nckd"] = first.value, second.value
                res = first.scaled(w.alpha) + second.scaled(w.beta)
            else:
                tau = sched(k)
                first, second, part = trkd_components(tl, logits, yb, tau, w)
                rec["tau"] = tau
                rec["loss_tmkd"], rec["loss_cfkd"] = first.value, second.value
                rec["confusion_size_mean"] = float(part.confusion_size.mean())
                res = first.scaled(w.lambda_m) + second.scaled(w.lambda_f)
            rec["_distill"] = res.value
            return rec, res.grad, None, ()

        return hook

    def _embedding_hook(self, teacher_emb):
        loss_fn = mse_embed_loss if self.method == "mse" else cos_embed_loss
        key = f"loss_{self.method}"

        def hook(k, idx, E, logits):
            # both sides at unit length: AAM leaves embedding norms arbitrary
            # (~1e2), and raw-norm MSE diverges at the default learning rate
            P = self.projection_
            U = normalize_rows(E)
            res = loss_fn(U @ P, teacher_emb[idx])
            d_E = _normalize_backward(E, U, res.grad @ P.T)
            return {key: res.value, "_distill": res.value}, None, d_E, (U.T @ res.grad,)

        return hook
