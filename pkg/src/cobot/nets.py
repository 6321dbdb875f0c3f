"""Binary sequence classifiers over scalar torque/wrench norm streams.

Each classifier is a single LSTM layer over a scalar input, a dense layer to
one logit and a logistic output, emitting one probability per sample.
Training minimizes the per-sample binary cross entropy with full
backpropagation through time, plain gradient descent with momentum and
global gradient-norm clipping; everything is seeded and single threaded so
repeated runs are bit-identical.

Gate layout in the stacked parameters is [input, forget, candidate, output].
"""

import copy
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, TrainingDiverged


@dataclass(frozen=True, eq=False)
class LabeledSeries:
    """Uniformly sampled scalar stream with one binary label per sample."""

    times: np.ndarray
    values: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        y = np.asarray(self.labels, dtype=int)
        if not (t.shape == v.shape == y.shape) or t.ndim != 1:
            raise ConfigError("series arrays must share one shape")
        if t.size >= 3:
            steps = np.diff(t)
            if not np.allclose(steps, steps[0], rtol=1e-6, atol=1e-9):
                raise ConfigError("series must be uniformly sampled")
        if not np.isin(y, (0, 1)).all():
            raise ConfigError("labels must be 0 or 1")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "labels", y)

    @property
    def period(self):
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.02


@dataclass
class RnnClassifier:
    hidden: int
    wx: np.ndarray       # (4H,)
    wh: np.ndarray       # (4H, H)
    b: np.ndarray        # (4H,)
    wd: np.ndarray       # (H,)
    bd: float
    input_mean: float = 0.0
    input_scale: float = 1.0

    def normalize(self, values):
        return (np.asarray(values, dtype=float) - self.input_mean) / self.input_scale

    def params(self):
        return {"wx": self.wx, "wh": self.wh, "b": self.b, "wd": self.wd,
                "bd": self.bd}


def init_classifier(hidden, seed, input_mean=0.0, input_scale=1.0):
    rng = np.random.default_rng(seed)
    s = 1.0 / math.sqrt(hidden)
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0  # open forget gates early in training
    return RnnClassifier(
        hidden=hidden,
        wx=rng.uniform(-s, s, size=4 * hidden),
        wh=rng.uniform(-s, s, size=(4 * hidden, hidden)),
        b=b,
        wd=rng.uniform(-s, s, size=hidden),
        bd=0.0,
        input_mean=float(input_mean),
        input_scale=float(input_scale),
    )


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _split(z, h):
    return z[..., :h], z[..., h:2 * h], z[..., 2 * h:3 * h], z[..., 3 * h:]


def _forward_batch(net, x_norm, keep_cache=False):
    """Run the cell over a (B, L) batch of normalized inputs."""
    bsz, length = x_norm.shape
    h = net.hidden
    hs = np.zeros((bsz, h))
    cs = np.zeros((bsz, h))
    probs = np.empty((bsz, length))
    cache = [] if keep_cache else None
    for t in range(length):
        z = x_norm[:, t, None] * net.wx + hs @ net.wh.T + net.b
        gi, gf, gg, go = _split(z, h)
        gi, gf, go = _sigmoid(gi), _sigmoid(gf), _sigmoid(go)
        gg = np.tanh(gg)
        c_prev = cs
        cs = gf * c_prev + gi * gg
        tc = np.tanh(cs)
        h_prev = hs
        hs = go * tc
        probs[:, t] = _sigmoid(hs @ net.wd + net.bd)
        if keep_cache:
            cache.append((gi, gf, gg, go, c_prev, tc, h_prev, hs))
    return probs, cache


def forward(net, values):
    """Per-sample probability of the positive class, streaming left to right."""
    x = net.normalize(np.atleast_1d(values))[None, :]
    return _forward_batch(net, x)[0][0]


class StreamingClassifier:
    """Stateful wrapper for on-line inference inside the control loop."""

    def __init__(self, net):
        self.net = net
        self.reset()

    def reset(self):
        self._h = np.zeros(self.net.hidden)
        self._c = np.zeros(self.net.hidden)

    def step(self, value):
        net = self.net
        x = (float(value) - net.input_mean) / net.input_scale
        z = x * net.wx + net.wh @ self._h + net.b
        gi, gf, gg, go = _split(z, net.hidden)
        gi, gf, go = _sigmoid(gi), _sigmoid(gf), _sigmoid(go)
        gg = np.tanh(gg)
        self._c = gf * self._c + gi * gg
        self._h = go * np.tanh(self._c)
        return float(_sigmoid(self._h @ net.wd + net.bd))


def _pad_batch(batch, net):
    length = max(s.values.size for s in batch)
    x = np.zeros((len(batch), length))
    y = np.zeros((len(batch), length))
    mask = np.zeros((len(batch), length), dtype=bool)
    for i, s in enumerate(batch):
        k = s.values.size
        x[i, :k] = net.normalize(s.values)
        y[i, :k] = s.labels
        mask[i, :k] = True
    return x, y, mask


def loss_and_gradients(net, batch):
    """Mean per-sample log loss and its gradients via backprop through time."""
    if not batch:
        raise ConfigError("empty batch")
    x, y, mask = _pad_batch(batch, net)
    probs, cache = _forward_batch(net, x, keep_cache=True)

    count = mask.sum()
    p = np.clip(probs, 1e-12, 1.0 - 1e-12)
    loss = float(-np.sum(mask * (y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
                 / count)
    if not np.isfinite(loss):
        raise TrainingDiverged("non-finite loss")

    h = net.hidden
    dlogit = np.where(mask, probs - y, 0.0) / count      # (B, L)
    grads = {"wx": np.zeros_like(net.wx), "wh": np.zeros_like(net.wh),
             "b": np.zeros_like(net.b), "wd": np.zeros_like(net.wd),
             "bd": 0.0}
    dh_next = np.zeros((x.shape[0], h))
    dc_next = np.zeros((x.shape[0], h))
    for t in range(x.shape[1] - 1, -1, -1):
        gi, gf, gg, go, c_prev, tc, h_prev, hs = cache[t]
        dl = dlogit[:, t]
        grads["wd"] += dl @ hs
        grads["bd"] += dl.sum()
        dh = dl[:, None] * net.wd + dh_next
        do = dh * tc
        dc = dh * go * (1.0 - tc * tc) + dc_next
        di = dc * gg
        dg = dc * gi
        df = dc * c_prev
        dc_next = dc * gf
        dz = np.concatenate([
            di * gi * (1.0 - gi),
            df * gf * (1.0 - gf),
            dg * (1.0 - gg * gg),
            do * go * (1.0 - go),
        ], axis=1)                                        # (B, 4H)
        grads["wx"] += x[:, t] @ dz
        grads["wh"] += dz.T @ h_prev
        grads["b"] += dz.sum(axis=0)
        dh_next = dz @ net.wh
    return loss, grads


def make_windows(series, window=250, overlap=0.5):
    """Fixed-length training windows with fractional overlap; sequences
    shorter than one window are kept whole."""
    step = max(1, int(window * (1.0 - overlap)))
    out = []
    for s in series:
        n = s.values.size
        if n <= window:
            out.append(s)
            continue
        starts = list(range(0, n - window + 1, step))
        if starts[-1] != n - window:
            starts.append(n - window)
        for a in starts:
            out.append(LabeledSeries(s.times[a:a + window],
                                     s.values[a:a + window],
                                     s.labels[a:a + window]))
    return out


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``hidden=100`` matches the reference setup; ``hidden=32`` is the
    documented fast fallback used by the shipped acceptance configuration,
    reaching the same accuracy targets on the synthetic corpus at a fraction
    of the cost.
    """

    hidden: int = 32
    learning_rate: float = 0.5
    epochs: int = 30
    batch_size: int = 16
    clip_norm: float = 1.0
    momentum: float = 0.9
    seed: int = 0
    val_fraction: float = 0.2
    window: int = 250
    overlap: float = 0.5


def _accuracy(net, series_list):
    good = total = 0
    for s in series_list:
        pred = forward(net, s.values) > 0.5
        good += int((pred == (s.labels == 1)).sum())
        total += s.labels.size
    return good / max(total, 1)


def _clip(grads, clip_norm):
    total = math.sqrt(sum(float(np.sum(np.square(g))) for g in grads.values()))
    if clip_norm and total > clip_norm:
        f = clip_norm / total
        return {k: g * f for k, g in grads.items()}, total
    return grads, total


def train(dataset, config=None):
    """Fit a classifier on labeled series; returns the best-validation model.

    Training diverging to a non-finite loss is retried once from scratch at
    half the learning rate before giving up.
    """
    config = config or TrainConfig()
    labels = np.concatenate([s.labels for s in dataset]) if dataset else np.array([])
    if labels.size == 0 or labels.min() == labels.max():
        raise ConfigError("dataset must contain both classes")

    try:
        return _train_once(dataset, config)
    except TrainingDiverged:
        from dataclasses import replace
        return _train_once(
            dataset, replace(config, learning_rate=config.learning_rate / 2.0))


def _train_once(dataset, config):
    values = np.concatenate([s.values for s in dataset])
    mean = float(values.mean())
    scale = float(values.std())
    if scale <= 0.0:
        scale = 1.0
    net = init_classifier(config.hidden, config.seed, mean, scale)

    windows = make_windows(dataset, config.window, config.overlap)
    rng = np.random.default_rng(config.seed + 1)
    order = rng.permutation(len(windows))
    n_val = max(1, int(len(windows) * config.val_fraction))
    val = [windows[i] for i in order[:n_val]]
    trainset = [windows[i] for i in order[n_val:]]
    if not trainset:
        raise ConfigError("not enough data to split train/validation")

    velocity = {k: np.zeros_like(v) if isinstance(v, np.ndarray) else 0.0
                for k, v in net.params().items()}
    best = copy.deepcopy(net)
    best_acc = _accuracy(net, val)
    history = []
    for _ in range(config.epochs):
        perm = rng.permutation(len(trainset))
        epoch_loss = 0.0
        nb = 0
        for a in range(0, len(perm), config.batch_size):
            batch = [trainset[i] for i in perm[a:a + config.batch_size]]
            loss, grads = loss_and_gradients(net, batch)
            grads, _ = _clip(grads, config.clip_norm)
            for k in velocity:
                velocity[k] = config.momentum * velocity[k] + grads[k]
            net.wx = net.wx - config.learning_rate * velocity["wx"]
            net.wh = net.wh - config.learning_rate * velocity["wh"]
            net.b = net.b - config.learning_rate * velocity["b"]
            net.wd = net.wd - config.learning_rate * velocity["wd"]
            net.bd = net.bd - config.learning_rate * velocity["bd"]
            epoch_loss += loss
            nb += 1
        acc = _accuracy(net, val)
        history.append({"loss": epoch_loss / max(nb, 1), "val_accuracy": acc})
        if acc > best_acc:
            best_acc = acc
            best = copy.deepcopy(net)
    return best, history


@dataclass
class ConfusionMatrix:
    """Two-class sample-by-sample tally, rows true and columns predicted."""

    counts: np.ndarray
    class_names: tuple = ("neg", "pos")

    @property
    def accuracy(self):
        return float(np.trace(self.counts)) / max(float(self.counts.sum()), 1.0)

    @property
    def recalls(self):
        rows = self.counts.sum(axis=1)
        return tuple(float(self.counts[i, i]) / r if (r := float(rows[i])) else 0.0
                     for i in range(2))

    @property
    def precisions(self):
        cols = self.counts.sum(axis=0)
        return tuple(float(self.counts[i, i]) / c if (c := float(cols[i])) else 0.0
                     for i in range(2))

    def to_json(self):
        neg, pos = self.class_names
        return {
            "classes": [neg, pos],
            "counts": {
                f"true_{neg}": {f"pred_{neg}": int(self.counts[0, 0]),
                                f"pred_{pos}": int(self.counts[0, 1])},
                f"true_{pos}": {f"pred_{neg}": int(self.counts[1, 0]),
                                f"pred_{pos}": int(self.counts[1, 1])},
            },
            "recall": {neg: self.recalls[0], pos: self.recalls[1]},
            "precision": {neg: self.precisions[0], pos: self.precisions[1]},
            "accuracy": self.accuracy,
        }


def evaluate(net, dataset, class_names=("neg", "pos")):
    """Sample-by-sample confusion tally at the 0.5 threshold."""
    counts = np.zeros((2, 2), dtype=int)
    for s in dataset:
        pred = (forward(net, s.values) > 0.5).astype(int)
        for true_cls in (0, 1):
            sel = s.labels == true_cls
            counts[true_cls, 0] += int((pred[sel] == 0).sum())
            counts[true_cls, 1] += int((pred[sel] == 1).sum())
    return ConfusionMatrix(counts, tuple(class_names))


def detection_latency(net, series, debounce=5):
    """Delay from the labeled onset to a debounced positive decision.

    The decision fires at the first run of ``debounce`` consecutive positive
    predictions starting at or after the onset; a flip exactly at the onset
    therefore measures debounce * T. Returns +inf when never detected.
    """
    onsets = np.flatnonzero(np.diff(np.concatenate([[0], series.labels])) == 1)
    if onsets.size != 1:
        raise ConfigError("series must contain exactly one labeled onset")
    onset = int(onsets[0])
    positive = forward(net, series.values) > 0.5
    run = 0
    for k in range(onset, positive.size):
        run = run + 1 if positive[k] else 0
        if run >= debounce:
            return (k - onset + 1) * series.period
    return math.inf


class Debouncer:
    """Suppresses output flips until ``n`` consecutive equal raw inputs."""

    def __init__(self, n=5, initial=0):
        self.n = int(n)
        self.state = initial
        self._cand = initial
        self._run = 0

    def update(self, raw):
        if raw == self.state:
            self._cand, self._run = raw, 0
            return self.state
        if raw == self._cand:
            self._run += 1
        else:
            self._cand, self._run = raw, 1
        if self._run >= self.n:
            self.state = self._cand
            self._run = 0
        return self.state


def class_counts(dataset):
    y = np.concatenate([s.labels for s in dataset])
    return int((y == 0).sum()), int((y == 1).sum())


def save_classifier(net, path):
    with open(path, "w") as fh:
        fh.write("# contact-classifier v1\n")
        fh.write(f"hidden {net.hidden}\n")
        fh.write(f"input_mean {net.input_mean!r}\n")
        fh.write(f"input_scale {net.input_scale!r}\n")
        for name in ("wx", "wh", "b", "wd"):
            arr = getattr(net, name)
            shape = "x".join(str(d) for d in arr.shape)
            fh.write(f"param {name} {shape} "
                     + " ".join(repr(float(v)) for v in arr.ravel()) + "\n")
        fh.write(f"param bd 1 {float(net.bd)!r}\n")


def load_classifier(path):
    if not os.path.exists(path):
        raise ConfigError(f"classifier file not found: {path}")
    fields, params = {}, {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "param":
                shape = tuple(int(v) for v in parts[2].split("x"))
                arr = np.array([float(v) for v in parts[3:]]).reshape(shape)
                params[parts[1]] = arr
            else:
                fields[parts[0]] = parts[1]
    try:
        return RnnClassifier(
            hidden=int(fields["hidden"]),
            wx=params["wx"], wh=params["wh"], b=params["b"], wd=params["wd"],
            bd=float(params["bd"][0]),
            input_mean=float(fields["input_mean"]),
            input_scale=float(fields["input_scale"]),
        )
    except KeyError as exc:
        raise ConfigError(f"bad classifier file {path}: missing {exc}") from exc


def save_dataset(dataset, directory):
    """One CSV per series (columns t, value, label) inside ``directory``."""
    os.makedirs(directory, exist_ok=True)
    for i, s in enumerate(dataset):
        data = np.column_stack([s.times, s.values, s.labels])
        np.savetxt(os.path.join(directory, f"series_{i:05d}.csv"), data,
                   delimiter=",", header="t,value,label", comments="")


def load_dataset(directory):
    if not os.path.isdir(directory):
        raise ConfigError(f"dataset directory not found: {directory}")
    out = []
    for name in sorted(os.listdir(directory)):
        if not name.endswith(".csv"):
            continue
        data = np.loadtxt(os.path.join(directory, name), delimiter=",",
                          skiprows=1, ndmin=2)
        out.append(LabeledSeries(data[:, 0], data[:, 1],
                                 data[:, 2].astype(int)))
    if not out:
        raise ConfigError(f"no series found in {directory}")
    return out
