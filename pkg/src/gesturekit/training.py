"""Head trainers: cross-entropy, adaptive per-parameter steps, early stopping.

Only head weights are ever trained; models receive features or activation
stacks, never frames or backbone parameters. The optimizer keeps a decaying
average of squared gradients and squared updates per parameter and scales
each step by their ratio, so no global learning rate needs tuning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import nnops
from .caption import CaptionModelWeights
from .classifier import DenseSoftmaxHead
from .pinch import PinchHeadWeights, pinch_logits

BN_MOMENTUM = 0.9


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 200
    batch_size: int = 32
    patience: int = 10
    rho: float = 0.95
    epsilon: float = 1e-6
    lr: float = 1.0
    augment: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("max_epochs, batch_size and patience must be >= 1")
        if not 0.0 <= self.rho < 1.0 or self.epsilon <= 0.0 or self.lr <= 0.0:
            raise ValueError("bad optimizer constants")


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    stopped_epoch: int = 0  # 1-based; == len(train_loss)
    best_epoch: int = 0


@dataclass(frozen=True)
class TrainData:
    train: Sequence
    val: Sequence


def cross_entropy(probs, target: int) -> float:
    """Negative log probability of the target class, clamped at 1e-12."""
    p = float(np.asarray(probs)[target])
    return float(-np.log(max(p, 1e-12)))


class AdaDelta:
    """Accumulates E[g^2] and E[dx^2] per parameter; steps by their RMS ratio."""

    def __init__(self, rho: float = 0.95, epsilon: float = 1e-6, lr: float = 1.0) -> None:
        self.rho = rho
        self.epsilon = epsilon
        self.lr = lr
        self._eg: dict[str, np.ndarray] = {}
        self._ed: dict[str, np.ndarray] = {}

    def update(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, grad in grads.items():
            p = params[name]
            eg = self._eg.setdefault(name, np.zeros_like(p))
            ed = self._ed.setdefault(name, np.zeros_like(p))
            eg *= self.rho
            eg += (1.0 - self.rho) * grad * grad
            step = -np.sqrt(ed + self.epsilon) / np.sqrt(eg + self.epsilon) * grad
            ed *= self.rho
            ed += (1.0 - self.rho) * step * step
            p += self.lr * step


class ClassifierModel:
    """Dense softmax head over pooled feature vectors."""

    def __init__(self, weights: DenseSoftmaxHead) -> None:
        self._w = np.array(weights.weights)
        self._b = np.array(weights.biases)

    @classmethod
    def init(cls, n_labels: int, feature_dim: int, seed: int = 0, init_scale: float = 0.05):
        rng = np.random.default_rng(seed)
        return cls(
            DenseSoftmaxHead(
                rng.uniform(-init_scale, init_scale, size=(n_labels, feature_dim)),
                np.zeros(n_labels),
            )
        )

    @property
    def weights(self) -> DenseSoftmaxHead:
        return DenseSoftmaxHead(self._w.copy(), self._b.copy())

    def params(self) -> dict[str, np.ndarray]:
        return {"W": self._w, "b": self._b}

    def loss_and_grads(self, batch):
        x = np.stack([np.asarray(f, dtype=np.float64) for f, _ in batch])
        y = np.array([t for _, t in batch])
        probs = nnops.softmax_rows(nnops.dense(x, self._w, self._b))
        loss, dlogits = nnops.cross_entropy_rows(probs, y)
        correct = int((probs.argmax(axis=1) == y).sum())
        _, dw, db = nnops.dense_backward(dlogits, x, self._w)
        return loss, correct, len(batch), {"W": dw, "b": db}

    def evaluate(self, samples):
        loss, correct, n, _ = self.loss_and_grads(list(samples))
        return loss / n, correct / n


class PinchModel:
    """Conv/batch-norm zoom head over (current, past) stack pairs.

    Batches run with batch statistics and update the stored running
    statistics (momentum 0.9); evaluation uses the stored ones.
    """

    def __init__(self, weights: PinchHeadWeights) -> None:
        self.weights = weights

    def params(self) -> dict[str, np.ndarray]:
        w = self.weights
        return {
            "conv_w": w.conv_w, "bn_gamma": w.bn_gamma, "bn_beta": w.bn_beta,
            "fc1_w": w.fc1_w, "fc1_b": w.fc1_b, "fc2_w": w.fc2_w, "fc2_b": w.fc2_b,
        }

    @staticmethod
    def _batch_input(batch) -> tuple[np.ndarray, np.ndarray]:
        x = np.stack([np.concatenate([cur, past], axis=0) for (cur, past), _ in batch])
        y = np.array([t for _, t in batch])
        return x.astype(np.float64), y

    def loss_and_grads(self, batch, update_stats: bool = True):
        w = self.weights
        x, y = self._batch_input(batch)
        logits, cache = pinch_logits(w, x, train_stats=True)
        conv_cache, bn_cache, pool_cache, flat, z1, a1, mean, var = cache
        if update_stats:
            w.bn_mean = BN_MOMENTUM * w.bn_mean + (1.0 - BN_MOMENTUM) * mean
            w.bn_var = BN_MOMENTUM * w.bn_var + (1.0 - BN_MOMENTUM) * var
        probs = nnops.softmax_rows(logits)
        loss, dlogits = nnops.cross_entropy_rows(probs, y)
        correct = int((probs.argmax(axis=1) == y).sum())

        da1, dfc2_w, dfc2_b = nnops.dense_backward(dlogits, a1, w.fc2_w)
        dz1 = nnops.relu_backward(da1, z1)
        dflat, dfc1_w, dfc1_b = nnops.dense_backward(dz1, flat, w.fc1_w)
        n, f = x.shape[0], w.conv_w.shape[0]
        h2, w2 = conv_cache[2][2] // 2, conv_cache[2][3] // 2
        dpool = dflat.reshape(n, f, h2, w2)
        dnormed = nnops.maxpool2_backward(dpool, pool_cache)
        dconv, dgamma, dbeta = nnops.batchnorm_train_backward(dnormed, bn_cache)
        _, dconv_w = nnops.conv3x3_backward(dconv, conv_cache)
        grads = {
            "conv_w": dconv_w, "bn_gamma": dgamma, "bn_beta": dbeta,
            "fc1_w": dfc1_w, "fc1_b": dfc1_b, "fc2_w": dfc2_w, "fc2_b": dfc2_b,
        }
        return loss, correct, len(batch), grads

    def evaluate(self, samples):
        w = self.weights
        x, y = self._batch_input(list(samples))
        logits, _ = pinch_logits(w, x, train_stats=False)
        probs = nnops.softmax_rows(logits)
        loss = sum(cross_entropy(probs[i], y[i]) for i in range(len(y)))
        correct = int((probs.argmax(axis=1) == y).sum())
        return loss / len(y), correct / len(y)


class CaptionModel:
    """Merge caption model; samples are (features, token-id sequence).

    The LSTM runs once over the whole sequence; the prediction after step t
    scores token t+1, which is exactly the growing-prefix formulation.
    """

    def __init__(self, weights: CaptionModelWeights) -> None:
        self.weights = weights

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self.weights, name) for name in CaptionModelWeights.tensor_names()}

    def _sequence_pass(self, feats: np.ndarray, tokens: Sequence[int], want_grads: bool):
        w = self.weights
        dim = w.dim
        img_z = w.img_w @ feats + w.img_b
        img_vec = nnops.relu(img_z)
        h = np.zeros(dim)
        c = np.zeros(dim)
        steps = []  # (token_in, lstm cache, head cache)
        loss = 0.0
        correct = 0
        grads = {name: np.zeros_like(p) for name, p in self.params().items()} if want_grads else None
        dimg_vec = np.zeros(dim)
        hs_grad = []  # pending dL/dh_t per step, filled during the forward
        for t in range(len(tokens) - 1):
            tok, target = tokens[t], tokens[t + 1]
            h, c, cache = nnops.lstm_step(w.emb[tok], h, c, w.lstm_wx, w.lstm_wh, w.lstm_b)
            merged = img_vec + h
            z1 = w.d1_w @ merged + w.d1_b
            a1 = nnops.relu(z1)
            z2 = w.d2_w @ a1 + w.d2_b
            a2 = nnops.relu(z2)
            logits = w.out_w @ a2 + w.out_b
            probs = nnops.softmax_rows(logits[None])[0]
            loss += cross_entropy(probs, target)
            correct += int(np.argmax(probs) == target)
            if want_grads:
                dlogits = probs.copy()
                dlogits[target] -= 1.0
                grads["out_w"] += np.outer(dlogits, a2)
                grads["out_b"] += dlogits
                da2 = w.out_w.T @ dlogits
                dz2 = da2 * (z2 > 0)
                grads["d2_w"] += np.outer(dz2, a1)
                grads["d2_b"] += dz2
                da1 = w.d2_w.T @ dz2
                dz1 = da1 * (z1 > 0)
                grads["d1_w"] += np.outer(dz1, merged)
                grads["d1_b"] += dz1
                dmerged = w.d1_w.T @ dz1
                dimg_vec += dmerged
                hs_grad.append(dmerged)
                steps.append((tok, cache))
        if want_grads and steps:
            dh = np.zeros(dim)
            dc = np.zeros(dim)
            for t in range(len(steps) - 1, -1, -1):
                tok, cache = steps[t]
                dh = dh + hs_grad[t]
                dx, dh, dc, dwx, dwh, db = nnops.lstm_step_backward(dh, dc, cache)
                grads["lstm_wx"] += dwx
                grads["lstm_wh"] += dwh
                grads["lstm_b"] += db
                grads["emb"][tok] += dx
            dimg_z = dimg_vec * (img_z > 0)
            grads["img_w"] += np.outer(dimg_z, feats)
            grads["img_b"] += dimg_z
        return loss, correct, len(tokens) - 1, grads

    def loss_and_grads(self, batch):
        total_loss = 0.0
        total_correct = 0
        total_units = 0
        agg = {name: np.zeros_like(p) for name, p in self.params().items()}
        for feats, tokens in batch:
            if len(tokens) < 2:
                raise ValueError("caption sample needs at least startseq plus one token")
            loss, correct, units, grads = self._sequence_pass(
                np.asarray(feats, dtype=np.float64), list(tokens), want_grads=True
            )
            total_loss += loss
            total_correct += correct
            total_units += units
            for name in agg:
                agg[name] += grads[name]
        return total_loss, total_correct, total_units, agg

    def evaluate(self, samples):
        total_loss = 0.0
        total_correct = 0
        total_units = 0
        for feats, tokens in samples:
            loss, correct, units, _ = self._sequence_pass(
                np.asarray(feats, dtype=np.float64), list(tokens), want_grads=False
            )
            total_loss += loss
            total_correct += correct
            total_units += units
        return total_loss / total_units, total_correct / total_units


def _snapshot(model) -> dict[str, np.ndarray]:
    return {name: p.copy() for name, p in model.params().items()}


def _restore(model, state: dict[str, np.ndarray]) -> None:
    for name, p in model.params().items():
        p[:] = state[name]


def train(model, data: TrainData, config: TrainConfig = TrainConfig()) -> TrainReport:
    """Minibatch training with early stopping on validation loss.

    Stops after `patience` epochs without strict improvement and leaves the
    model at the best epoch's weights.
    """
    train_samples = list(data.train)
    val_samples = list(data.val)
    if not train_samples or not val_samples:
        raise ValueError("training and validation sets must be non-empty")
    targets = {t for _, t in train_samples} if not isinstance(train_samples[0][1], (list, tuple)) else None
    if targets is not None and len(targets) < 2:
        warnings.warn("training set has a single class; the fit is degenerate", stacklevel=2)

    rng = np.random.default_rng(config.seed)
    opt = AdaDelta(config.rho, config.epsilon, config.lr)
    report = TrainReport()
    best_loss = np.inf
    best_state = _snapshot(model)
    since_best = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_samples))
        epoch_loss = 0.0
        epoch_correct = 0
        epoch_units = 0
        for start in range(0, len(order), config.batch_size):
            batch = [train_samples[i] for i in order[start : start + config.batch_size]]
            loss, correct, units, grads = model.loss_and_grads(batch)
            opt.update(model.params(), grads)
            epoch_loss += loss
            epoch_correct += correct
            epoch_units += units
        val_loss, val_acc = model.evaluate(val_samples)
        report.train_loss.append(epoch_loss / epoch_units)
        report.train_acc.append(epoch_correct / epoch_units)
        report.val_loss.append(val_loss)
        report.val_acc.append(val_acc)
        report.stopped_epoch = epoch
        if val_loss < best_loss:
            best_loss = val_loss
            best_state = _snapshot(model)
            report.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    _restore(model, best_state)
    return report


def two_phase(
    model, synthetic: TrainData, real: TrainData, config: TrainConfig = TrainConfig()
) -> tuple[TrainReport, TrainReport]:
    """Train on synthetic data, then continue from those weights on real data."""
    first = train(model, synthetic, config)
    second = train(model, real, config)
    return first, second


def gradient_check(
    model, batch, n_coords: int = 20, step: float = 1e-5, seed: int = 0
) -> float:
    """Max relative error between analytic and central-difference gradients."""
    rng = np.random.default_rng(seed)
    _, _, _, grads = model.loss_and_grads(batch)
    params = model.params()
    worst = 0.0
    names = sorted(params)
    for _ in range(n_coords):
        name = names[rng.integers(len(names))]
        p = params[name]
        idx = tuple(rng.integers(s) for s in p.shape)
        orig = p[idx]
        p[idx] = orig + step
        plus = model.loss_and_grads(batch)[0]
        p[idx] = orig - step
        minus = model.loss_and_grads(batch)[0]
        p[idx] = orig
        numeric = (plus - minus) / (2.0 * step)
        analytic = grads[name][idx]
        denom = max(abs(numeric), abs(analytic), 1e-8)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst
