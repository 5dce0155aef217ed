"""Variational-circuit surrogate for the robustness metric, and the update-direction ablation.

The circuit acts on 6 qubits in 2 blocks. Each block is an RY encoding
layer, a trainable per-qubit ``RY(a) RZ(b)`` layer (RZ first), and a fixed CNOT
pattern ``(0,1)(2,3)(4,5)``, ``(1,2)(3,4)``, ``(0,5)``. The readout is
``<Z_i>`` on every qubit, followed by a small classical head.

Seven inputs go onto six qubits with re-uploading: block 1 encodes
``x1..x6`` on qubits 0..5 and block 2 encodes ``x7`` on qubit 0 and ``x2..x6``
on qubits 1..5.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .montecarlo import gate_fidelities, noise_batches
from .noise import NoisePsd
from .optimize import ControlProblem
from .pulse import AMP_PHASE, PulseParams, evaluate_pulse
from .ripv import ExactEvaluator, FamilyRecord, RipvConfig, generate_family, sweep_steps

logger = logging.getLogger(__name__)

N_QUBITS = 6
N_BLOCKS = 2
N_INPUTS = 7
DIM = 2**N_QUBITS
# input index feeding each encoding gate, block by block, qubit by qubit
ENCODING_INDEX = np.array([0, 1, 2, 3, 4, 5, 6, 1, 2, 3, 4, 5])
N_PARAMS = N_BLOCKS * N_QUBITS * 2
ENTANGLER = ((0, 1), (2, 3), (4, 5), (1, 2), (3, 4), (0, 5))
SHIFT = np.pi / 2


def _bits(k: int) -> np.ndarray:
    return np.array([(k >> (N_QUBITS - 1 - q)) & 1 for q in range(N_QUBITS)])


def _entangler_perm() -> np.ndarray:
    """Index map ``new[i] = old[perm[i]]`` for the whole CNOT pattern (qubit 0 is the most significant bit)."""
    perm = np.arange(DIM)
    for c, t in ENTANGLER:
        step = np.empty(DIM, dtype=int)
        for i in range(DIM):
            b = _bits(i)
            if b[c]:
                b[t] ^= 1
            step[i] = int("".join(map(str, b)), 2)
        perm = perm[step]
    return perm


_PERM = _entangler_perm()
_ZSIGN = np.array([1 - 2 * _bits(k) for k in range(DIM)], dtype=float)  # (DIM, N_QUBITS)


def _ry(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2).astype(complex)


def _rz(theta):
    e = np.exp(-0.5j * theta)
    z = np.zeros_like(e)
    return np.stack([np.stack([e, z], -1), np.stack([z, e.conj()], -1)], -2)


def _apply(state, gates, q):
    """Apply per-sample 2x2 ``gates`` (B, 2, 2) to qubit ``q`` of ``state`` (B, DIM)."""
    B = state.shape[0]
    s = state.reshape(B, 2**q, 2, 2 ** (N_QUBITS - q - 1))
    return np.einsum("bij,bajc->baic", gates, s).reshape(B, DIM)


def simulate(enc, params, return_state: bool = False):
    """Run the circuit for a batch.

    Parameters
    ----------
    enc : ndarray, shape (B, 12)
        Encoding-gate angles, block by block.
    params : ndarray, shape (B, 24) or (24,)
        Trainable angles laid out as ``(block, qubit, [ry, rz])``.

    Returns
    -------
    ndarray, shape (B, 6)
        ``<Z_i>`` per qubit, or the final statevector if ``return_state``.
    """
    enc = np.atleast_2d(np.asarray(enc, dtype=float))
    B = enc.shape[0]
    params = np.broadcast_to(np.asarray(params, dtype=float), (B, N_PARAMS)).reshape(B, N_BLOCKS, N_QUBITS, 2)
    state = np.zeros((B, DIM), dtype=complex)
    state[:, 0] = 1.0
    for b in range(N_BLOCKS):
        for q in range(N_QUBITS):
            state = _apply(state, _ry(enc[:, b * N_QUBITS + q]), q)
            state = _apply(state, _rz(params[:, b, q, 1]), q)
            state = _apply(state, _ry(params[:, b, q, 0]), q)
        state = state[:, _PERM]
    if return_state:
        return state
    return (np.abs(state) ** 2) @ _ZSIGN


def _shift_jacobian(fn, angles):
    """Parameter-shift Jacobian of ``fn`` (B, K) -> (B, 6) with respect to every angle; returns (B, K, 6)."""
    B, K = angles.shape
    shifts = SHIFT * np.eye(K)
    probes = np.concatenate([angles[:, None, :] + shifts, angles[:, None, :] - shifts], axis=1)
    out = fn(probes.reshape(B * 2 * K, K)).reshape(B, 2 * K, N_QUBITS)
    return (out[:, :K] - out[:, K:]) / 2


# --------------------------------------------------------------------- normalizer

@dataclass(frozen=True)
class Normalizer:
    """Affine map of amplitude coordinates onto ``[-pi, pi]``; phases are only wrapped."""

    amp_index: tuple
    amp_min: tuple
    amp_max: tuple

    @classmethod
    def fit(cls, inputs, basis: str = AMP_PHASE) -> "Normalizer":
        inputs = np.asarray(inputs, dtype=float)
        P = inputs.shape[1]
        n_amp = (P + 1) // 2 if basis == AMP_PHASE else P
        lo, hi = inputs[:, :n_amp].min(axis=0), inputs[:, :n_amp].max(axis=0)
        # a constant coordinate gets a unit-width window so the map stays finite
        flat = hi - lo < 1e-12
        lo, hi = np.where(flat, lo - 0.5, lo), np.where(flat, hi + 0.5, hi)
        return cls(tuple(range(n_amp)), tuple(map(float, lo)), tuple(map(float, hi)))

    def _arrays(self):
        return np.array(self.amp_index, dtype=int), np.array(self.amp_min), np.array(self.amp_max)

    def encode(self, values, warn: bool = True) -> np.ndarray:
        values = np.atleast_2d(np.asarray(values, dtype=float))
        idx, lo, hi = self._arrays()
        x = np.angle(np.exp(1j * values))  # wraps into (-pi, pi]
        x = np.where(np.isclose(x, np.pi), -np.pi, x)
        amps = values[:, idx]
        if warn and (np.any(amps < lo) or np.any(amps > hi)):
            logger.warning("surrogate input outside the training amplitude range; clamping")
        x[:, idx] = -np.pi + 2 * np.pi * (np.clip(amps, lo, hi) - lo) / (hi - lo)
        return x

    def jacobian_diag(self, values) -> np.ndarray:
        """``dx/dc`` per coordinate (zero where an amplitude is clamped)."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        idx, lo, hi = self._arrays()
        d = np.ones_like(values)
        amps = values[:, idx]
        d[:, idx] = np.where((amps >= lo) & (amps <= hi), 2 * np.pi / (hi - lo), 0.0)
        return d


# --------------------------------------------------------------------- model

@dataclass
class VqcModel:
    normalizer: Normalizer
    params: np.ndarray
    head: dict
    label_mean: float = 0.0
    label_std: float = 1.0
    basis: str = AMP_PHASE

    @classmethod
    def initialize(cls, normalizer: Normalizer, seed: int = 0, hidden: int = 0, basis: str = AMP_PHASE,
                   label_mean: float = 0.0, label_std: float = 1.0) -> "VqcModel":
        rng = np.random.default_rng(seed)
        params = rng.normal(0.0, 0.5, N_PARAMS)
        if hidden:
            head = {"W1": rng.normal(0.0, 1 / math.sqrt(N_QUBITS), (hidden, N_QUBITS)), "b1": np.zeros(hidden),
                    "w": rng.normal(0.0, 1 / math.sqrt(hidden), hidden), "b": np.zeros(1)}
        else:
            head = {"w": rng.normal(0.0, 0.1, N_QUBITS), "b": np.zeros(1)}
        return cls(normalizer, params, head, label_mean, label_std, basis)

    @property
    def hidden(self) -> int:
        return 0 if "W1" not in self.head else self.head["W1"].shape[0]

    # head in standardized label units
    def _head(self, z):
        if self.hidden:
            h = np.tanh(z @ self.head["W1"].T + self.head["b1"])
            return h @ self.head["w"] + self.head["b"][0], h
        return z @ self.head["w"] + self.head["b"][0], None

    def _head_input_grad(self, z, h):
        """d(standardized output)/dz, shape (B, 6)."""
        if self.hidden:
            return ((1 - h**2) * self.head["w"]) @ self.head["W1"]
        return np.broadcast_to(self.head["w"], z.shape)

    def _head_param_grads(self, z, h, dy):
        """Gradients of ``sum(dy * y)`` with respect to the head entries."""
        if self.hidden:
            dh = dy[:, None] * self.head["w"] * (1 - h**2)
            return {"W1": dh.T @ z, "b1": dh.sum(0), "w": h.T @ dy, "b": np.array([dy.sum()])}
        return {"w": z.T @ dy, "b": np.array([dy.sum()])}

    def features(self, values, warn: bool = True) -> np.ndarray:
        x = self.normalizer.encode(values, warn)
        return simulate(x[:, ENCODING_INDEX], self.params)

    def predict(self, values):
        """Predicted robustness metric for one parameter vector or a batch."""
        values = np.asarray(values.values if isinstance(values, PulseParams) else values, dtype=float)
        y, _ = self._head(self.features(values))
        out = self.label_mean + self.label_std * y
        return float(out[0]) if values.ndim == 1 else out

    def input_gradient(self, values) -> np.ndarray:
        """Gradient of ``predict`` with respect to the raw parameters via parameter shift on encoding gates."""
        values = np.asarray(values.values if isinstance(values, PulseParams) else values, dtype=float)
        single = values.ndim == 1
        values = np.atleast_2d(values)
        x = self.normalizer.encode(values, warn=False)
        enc = x[:, ENCODING_INDEX]
        z = simulate(enc, self.params)
        _, h = self._head(z)
        dy_dz = self._head_input_grad(z, h)
        dz_denc = _shift_jacobian(lambda e: simulate(e, self.params), enc)  # (B, 12, 6)
        dy_denc = np.einsum("bki,bi->bk", dz_denc, dy_dz)
        dy_dx = np.zeros_like(x)
        np.add.at(dy_dx.T, ENCODING_INDEX, dy_denc.T)
        grad = self.label_std * dy_dx * self.normalizer.jacobian_diag(values)
        return grad[0] if single else grad

    def to_json(self, config_hash: str = "") -> str:
        return json.dumps({
            "normalizer": asdict(self.normalizer),
            "params": self.params.tolist(),
            "head": {k: np.asarray(v).tolist() for k, v in self.head.items()},
            "label_mean": self.label_mean,
            "label_std": self.label_std,
            "basis": self.basis,
            "config_hash": config_hash,
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "VqcModel":
        d = json.loads(text)
        n = d["normalizer"]
        norm = Normalizer(tuple(n["amp_index"]), tuple(n["amp_min"]), tuple(n["amp_max"]))
        head = {k: np.array(v, dtype=float) for k, v in d["head"].items()}
        return cls(norm, np.array(d["params"], dtype=float), head, d["label_mean"], d["label_std"], d["basis"])


def encode_inputs(model_or_normalizer, params) -> np.ndarray:
    """Normalized input angles for one pulse."""
    norm = getattr(model_or_normalizer, "normalizer", model_or_normalizer)
    values = params.values if isinstance(params, PulseParams) else params
    return norm.encode(values)[0]


def predict(model: VqcModel, params) -> float:
    return model.predict(params)


def input_gradient(model: VqcModel, params) -> np.ndarray:
    return model.input_gradient(params)


class SurrogateEvaluator:
    """RIPV evaluator backed by a trained surrogate."""

    def __init__(self, model: VqcModel):
        self.model = model

    def value(self, values) -> float:
        return float(self.model.predict(np.asarray(values, dtype=float)))

    def value_and_gradient(self, values):
        values = np.asarray(values, dtype=float)
        return self.value(values), self.model.input_gradient(values)


# --------------------------------------------------------------------- data and training

@dataclass
class SurrogateDataset:
    """Parameter vectors with exact robustness labels and an optional train/val/test tag per row."""

    inputs: np.ndarray
    labels: np.ndarray
    split: np.ndarray | None = None

    def __len__(self):
        return self.labels.size

    def with_split(self, config: "TrainConfig", seed: int = 0) -> "SurrogateDataset":
        if len(self) != config.dataset_cap:
            raise ValueError(f"dataset has {len(self)} rows; config expects {config.dataset_cap}")
        tags = np.empty(len(self), dtype=object)
        order = np.random.default_rng(seed).permutation(len(self))
        tr, va, te = np.split(order, [config.n_train, config.n_train + config.n_val])
        tags[tr], tags[va], tags[te] = "train", "val", "test"
        return SurrogateDataset(self.inputs, self.labels, tags.astype(str))

    def to_csv(self, path, header_comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            extra = ["split"] if self.split is not None else []
            writer.writerow([*[f"c{i + 1}" for i in range(self.inputs.shape[1])], "L_robust", *extra])
            for i, (c, y) in enumerate(zip(self.inputs, self.labels)):
                tag = [self.split[i]] if self.split is not None else []
                writer.writerow([*map(repr, map(float, c)), repr(float(y)), *tag])

    @classmethod
    def from_csv(cls, path) -> "SurrogateDataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(line for line in fh if not line.startswith("#")))
        header, body = rows[0], rows[1:]
        split = None
        if header[-1] == "split":
            split = np.array([r[-1] for r in body])
            body = [r[:-1] for r in body]
        arr = np.array(body, dtype=float).reshape(len(body), -1)
        return cls(arr[:, :-1], arr[:, -1], split)


def sample_dataset(record: FamilyRecord, problem: ControlProblem, n: int = 512, sigma_frac: float = 0.1,
                   seed: int = 0, chunk: int = 128) -> SurrogateDataset:
    """Gaussian perturbations around trajectory waypoints, labelled with the exact metric."""
    rng = np.random.default_rng(seed)
    way = np.array([e.values for e in record.all_entries()])
    span = way.max(axis=0) - way.min(axis=0)
    sigma = sigma_frac * np.where(span > 0, span, np.maximum(np.abs(way).max(axis=0), 1e-3))
    centers = way[rng.integers(0, len(way), n)]
    inputs = centers + sigma * rng.standard_normal(centers.shape)
    labels = np.concatenate([np.atleast_1d(problem.robustness(inputs[i:i + chunk])) for i in range(0, n, chunk)])
    return SurrogateDataset(inputs, labels)


@dataclass(frozen=True)
class TrainConfig:
    dataset_cap: int = 512
    n_train: int = 409
    n_val: int = 51
    n_test: int = 52
    lr: float = 0.01
    betas: tuple = (0.9, 0.999)
    batch_size: int = 8
    grad_clip: float = 1.0
    patience: int = 4
    max_epochs: int = 200
    hidden: int = 0

    def __post_init__(self):
        if self.n_train + self.n_val + self.n_test != self.dataset_cap:
            raise ValueError("split sizes must sum to the dataset cap")
        if min(self.n_train, self.n_val) < 1 or self.batch_size < 1:
            raise ValueError("need non-empty train and validation splits and a positive batch size")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class TrainReport:
    epochs: int
    best_epoch: int
    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    test_mse: float = float("nan")
    split: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _loss_and_grads(model: VqcModel, x, t):
    """MSE in standardized units and its gradients (circuit params by parameter shift, head analytically)."""
    enc = x[:, ENCODING_INDEX]
    B = enc.shape[0]
    z = simulate(enc, model.params)
    y, h = model._head(z)
    r = y - t
    loss = float(np.mean(r**2))
    dy = 2 * r / B
    grads = model._head_param_grads(z, h, dy)
    dL_dz = dy[:, None] * model._head_input_grad(z, h)
    # every sample shares params; shift them all at once
    K = N_PARAMS
    shifts = SHIFT * np.eye(K)
    probes = np.concatenate([model.params + shifts, model.params - shifts])  # (2K, K)
    enc_rep = np.repeat(enc[None], 2 * K, axis=0).reshape(2 * K * B, -1)
    par_rep = np.repeat(probes, B, axis=0)
    zs = simulate(enc_rep, par_rep).reshape(2 * K, B, N_QUBITS)
    dz_dp = (zs[:K] - zs[K:]) / 2  # (K, B, 6)
    grads["params"] = np.einsum("kbi,bi->k", dz_dp, dL_dz)
    return loss, grads


def _mse(model: VqcModel, x, t) -> float:
    y, _ = model._head(simulate(x[:, ENCODING_INDEX], model.params))
    return float(np.mean((y - t) ** 2))


def train(dataset: SurrogateDataset, config: TrainConfig = TrainConfig(), seed: int = 0,
          basis: str = AMP_PHASE) -> tuple[VqcModel, TrainReport]:
    """Mini-batch Adam on the mean squared error with validation early stopping.

    Uses the dataset's split column when present, otherwise draws one from ``seed``.

    Returns the model at the best validation epoch. MSE values in the report are
    in standardized label units.
    """
    if dataset.split is None:
        dataset = dataset.with_split(config, seed)
    tr, va, te = (np.flatnonzero(dataset.split == tag) for tag in ("train", "val", "test"))
    if tr.size == 0 or va.size == 0:
        raise ValueError("dataset split has no training or validation rows")
    rng = np.random.default_rng(seed)
    norm = Normalizer.fit(dataset.inputs[tr], basis)
    mean, std = float(dataset.labels[tr].mean()), float(dataset.labels[tr].std())
    std = std if std > 0 else 1.0
    model = VqcModel.initialize(norm, seed, config.hidden, basis, mean, std)
    x = norm.encode(dataset.inputs, warn=False)
    t = (dataset.labels - mean) / std

    names = ["params", *model.head]
    m = {k: np.zeros_like(model.params if k == "params" else model.head[k]) for k in names}
    v = {k: np.zeros_like(m[k]) for k in names}
    b1, b2 = config.betas
    step = 0
    best = (_mse(model, x[va], t[va]), 0, model.params.copy(), {k: a.copy() for k, a in model.head.items()})
    report = TrainReport(0, 0, split={"train": tr.tolist(), "val": va.tolist(), "test": te.tolist()})
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(tr)
        for start in range(0, perm.size, config.batch_size):
            idx = perm[start:start + config.batch_size]
            loss, g = _loss_and_grads(model, x[idx], t[idx])
            if not math.isfinite(loss):
                raise FloatingPointError("non-finite training loss")
            norm2 = math.sqrt(sum(float(np.sum(a**2)) for a in g.values()))
            if norm2 > config.grad_clip:
                g = {k: a * (config.grad_clip / norm2) for k, a in g.items()}
            step += 1
            for k in names:
                m[k] = b1 * m[k] + (1 - b1) * g[k]
                v[k] = b2 * v[k] + (1 - b2) * g[k] ** 2
                upd = config.lr * (m[k] / (1 - b1**step)) / (np.sqrt(v[k] / (1 - b2**step)) + 1e-8)
                if k == "params":
                    model.params = model.params - upd
                else:
                    model.head[k] = model.head[k] - upd
        report.train_mse.append(_mse(model, x[tr], t[tr]))
        val = _mse(model, x[va], t[va])
        report.val_mse.append(val)
        report.epochs = epoch
        if val < best[0]:
            best = (val, epoch, model.params.copy(), {k: a.copy() for k, a in model.head.items()})
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    _, report.best_epoch, model.params, model.head = best
    if te.size:
        report.test_mse = _mse(model, x[te], t[te])
    logger.info("surrogate: %d epochs, best %d, val mse %.4g", report.epochs, report.best_epoch, best[0])
    return model, report


# --------------------------------------------------------------------- ablation

ABLATION_STRATEGIES = ("exact", "vqc", "theta-direct", "random-projected")


@dataclass
class AblationResult:
    rows: list = field(default_factory=list)  # (strategy, level, delta_rms_mean, mean_fidelity, n_runs)
    finals: dict = field(default_factory=dict)

    def fidelity(self, strategy: str, level: int = -1) -> float:
        rows = [r for r in self.rows if r[0] == strategy]
        return rows[level][3]

    def to_csv(self, path, header_comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["strategy", "strength_level", "delta_rms_mean", "mean_fidelity", "n_runs"])
            for r in self.rows:
                writer.writerow([r[0], r[1], repr(r[2]), repr(r[3]), r[4]])


def ablation(init: PulseParams, problem: ControlProblem, model: VqcModel, psd: NoisePsd, levels,
             theta_target: float = 1.5 * math.pi, samples: int = 500, seed: int = 0, dtheta: float = 0.002,
             n_random: int = 8, strategies=ABLATION_STRATEGIES, precomputed: dict | None = None) -> AblationResult:
    """Transport ``init`` to ``theta_target`` under each update rule and score the endpoints by Monte Carlo.

    One surrogate serves every angle; all strategies see the same noise batch at
    each strength. The random-projected entry averages ``n_random`` runs.
    ``precomputed`` maps a strategy to already-transported endpoint vectors,
    which skips that sweep (useful when retraining only the surrogate).

    Endpoints are scored against the angle the sweep actually recorded,
    ``theta_0 + n dtheta``, which can overshoot ``theta_target`` by under one step.
    """
    theta_end = problem.theta_target + sweep_steps(problem.theta_target, theta_target, dtheta) * dtheta
    finals = {}
    for strategy in strategies:
        if precomputed and strategy in precomputed:
            finals[strategy] = [np.asarray(v, dtype=float) for v in precomputed[strategy]]
        elif strategy == "exact":
            cfg = RipvConfig(dtheta, theta_target, "project")
            finals[strategy] = [generate_family(init, problem, cfg, ExactEvaluator(problem)).entries[-1].values]
        elif strategy == "vqc":
            cfg = RipvConfig(dtheta, theta_target, "project")
            finals[strategy] = [generate_family(init, problem, cfg, SurrogateEvaluator(model)).entries[-1].values]
        elif strategy == "theta-direct":
            cfg = RipvConfig(dtheta, theta_target, "theta-direct")
            finals[strategy] = [generate_family(init, problem, cfg, None).entries[-1].values]
        elif strategy == "random-projected":
            runs = []
            for r in range(n_random):
                cfg = RipvConfig(dtheta, theta_target, "random-projected", seed=seed + 1 + r)
                runs.append(generate_family(init, problem, cfg, None).entries[-1].values)
            finals[strategy] = runs
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
    result = AblationResult(finals=finals)
    for i, (rms, _, noise) in enumerate(noise_batches(psd, levels, samples, seed, problem.grid)):
        delta = float(np.mean(np.sqrt(np.mean(noise**2, axis=1))))
        for strategy, runs in finals.items():
            fids = [gate_fidelities(problem.model, evaluate_pulse(PulseParams(c, problem.basis), problem.grid,
                                                                  problem.window), noise, problem.grid,
                                    theta_end).mean() for c in runs]
            result.rows.append((strategy, i, delta, float(np.mean(fids)), len(runs)))
    return result
