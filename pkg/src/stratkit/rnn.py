"""Autoregressive GRU/LSTM stay embedders trained with hand-derived BPTT.

The self-supervised objective predicts the next hour's feature vector from
the hidden state; the stay embedding is the hidden state after the last
timestep. Statics are appended to every timestep's input and excluded from
the prediction target. A per-feature variant runs one independent small
cell per feature and concatenates the final hidden states.

Everything is float64 numpy. Gradients are exact full-sequence BPTT,
validated against central finite differences in the test suite.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .cohort import Cohort
from .embed_stat import EmbeddingMatrix
from .errors import (
    DivergedLoss,
    EmptySeries,
    NonFiniteActivation,
    NonFiniteGradient,
)
from .seeding import rng_for, stable_hash64


@dataclass
class RnnConfig:
    cell: str = "gru"  # gru | lstm
    hidden_size: int = 64
    per_feature: bool = False
    per_feature_hidden: int = 8
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip_norm: float = 1.0
    seed: int = 0

    def validate(self):
        if self.cell not in ("gru", "lstm"):
            raise ValueError(f"unknown cell {self.cell!r}")
        if self.hidden_size < 1 or self.per_feature_hidden < 1:
            raise ValueError("hidden sizes must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        return self


@dataclass
class RnnModel:
    cell: str
    hidden_size: int  # per-cell hidden width
    n_features: int
    static_width: int
    per_feature: bool
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_cells(self):
        return self.n_features if self.per_feature else 1

    @property
    def cell_input_width(self):
        return (1 if self.per_feature else self.n_features) + self.static_width

    @property
    def embedding_dim(self):
        return self.n_cells * self.hidden_size

    def param_names(self):
        return list(self.params)


def _gate_count(cell):
    return 3 if cell == "gru" else 4


def init_model(config: RnnConfig, n_features: int, static_width: int, seed: int) -> RnnModel:
    """Weights ~ Uniform(-1/sqrt(H), 1/sqrt(H)), biases zero, seeded."""
    config.validate()
    hidden = config.per_feature_hidden if config.per_feature else config.hidden_size
    model = RnnModel(
        cell=config.cell,
        hidden_size=hidden,
        n_features=n_features,
        static_width=static_width,
        per_feature=config.per_feature,
    )
    n_gates = _gate_count(config.cell)
    in_width = model.cell_input_width
    out_width = 1 if config.per_feature else n_features
    bound = 1.0 / np.sqrt(hidden)
    for c in range(model.n_cells):
        prefix = f"f{c}." if config.per_feature else ""
        for name, shape in (
            ("W", (n_gates * hidden, in_width)),
            ("U", (n_gates * hidden, hidden)),
            ("b", (n_gates * hidden,)),
            ("W_out", (out_width, hidden)),
            ("b_out", (out_width,)),
        ):
            key = prefix + name
            if name.startswith("b"):
                model.params[key] = np.zeros(shape)
            else:
                rng = rng_for(seed, "init", key)
                model.params[key] = rng.uniform(-bound, bound, size=shape)
    return model


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _gru_forward(params, prefix, x):
    """x: (B, T, I). Returns hidden states (B, T+1, H) with h_0 = 0 and the
    per-step cache needed for BPTT."""
    W, U, b = params[prefix + "W"], params[prefix + "U"], params[prefix + "b"]
    h_dim = U.shape[1]
    n_batch, t_len, _ = x.shape
    hs = np.zeros((n_batch, t_len + 1, h_dim))
    zs = np.empty((n_batch, t_len, h_dim))
    rs = np.empty((n_batch, t_len, h_dim))
    ns = np.empty((n_batch, t_len, h_dim))
    xw = x @ W.T + b  # (B, T, 3H)
    u_zr = U[: 2 * h_dim]
    u_n = U[2 * h_dim :]
    for t in range(t_len):
        h_prev = hs[:, t]
        zr = _sigmoid(xw[:, t, : 2 * h_dim] + h_prev @ u_zr.T)
        z, r = zr[:, :h_dim], zr[:, h_dim:]
        n = np.tanh(xw[:, t, 2 * h_dim :] + (r * h_prev) @ u_n.T)
        hs[:, t + 1] = (1.0 - z) * n + z * h_prev
        zs[:, t], rs[:, t], ns[:, t] = z, r, n
    return hs, (zs, rs, ns)


def _gru_backward(params, prefix, x, hs, cache, d_hs):
    """d_hs: (B, T, H) loss gradient on each h_t (t = 1..T). Returns grads
    for W, U, b under the same key prefix."""
    W, U = params[prefix + "W"], params[prefix + "U"]
    h_dim = U.shape[1]
    zs, rs, ns = cache
    n_batch, t_len, _ = x.shape
    d_w = np.zeros_like(W)
    d_u = np.zeros_like(U)
    d_b = np.zeros(W.shape[0])
    u_zr = U[: 2 * h_dim]
    u_n = U[2 * h_dim :]
    carry = np.zeros((n_batch, h_dim))
    for t in range(t_len - 1, -1, -1):
        dh = d_hs[:, t] + carry
        z, r, n = zs[:, t], rs[:, t], ns[:, t]
        h_prev = hs[:, t]
        dn = dh * (1.0 - z)
        dz = dh * (h_prev - n)
        dh_prev = dh * z
        dn_pre = dn * (1.0 - n * n)
        drh = dn_pre @ u_n
        dr = drh * h_prev
        dh_prev += drh * r
        dz_pre = dz * z * (1.0 - z)
        dr_pre = dr * r * (1.0 - r)
        d_gates = np.concatenate([dz_pre, dr_pre, dn_pre], axis=1)  # (B, 3H)
        d_w += d_gates.T @ x[:, t]
        d_b += d_gates.sum(axis=0)
        d_u[: 2 * h_dim] += d_gates[:, : 2 * h_dim].T @ h_prev
        d_u[2 * h_dim :] += dn_pre.T @ (r * h_prev)
        dh_prev += d_gates[:, : 2 * h_dim] @ u_zr
        carry = dh_prev
    return {prefix + "W": d_w, prefix + "U": d_u, prefix + "b": d_b}


def _lstm_forward(params, prefix, x):
    W, U, b = params[prefix + "W"], params[prefix + "U"], params[prefix + "b"]
    h_dim = U.shape[1]
    n_batch, t_len, _ = x.shape
    hs = np.zeros((n_batch, t_len + 1, h_dim))
    cs = np.zeros((n_batch, t_len + 1, h_dim))
    gates = np.empty((n_batch, t_len, 4 * h_dim))
    xw = x @ W.T + b
    for t in range(t_len):
        pre = xw[:, t] + hs[:, t] @ U.T
        i = _sigmoid(pre[:, :h_dim])
        f = _sigmoid(pre[:, h_dim : 2 * h_dim])
        g = np.tanh(pre[:, 2 * h_dim : 3 * h_dim])
        o = _sigmoid(pre[:, 3 * h_dim :])
        cs[:, t + 1] = f * cs[:, t] + i * g
        hs[:, t + 1] = o * np.tanh(cs[:, t + 1])
        gates[:, t] = np.concatenate([i, f, g, o], axis=1)
    return hs, (cs, gates)


def _lstm_backward(params, prefix, x, hs, cache, d_hs):
    W, U = params[prefix + "W"], params[prefix + "U"]
    h_dim = U.shape[1]
    cs, gates = cache
    n_batch, t_len, _ = x.shape
    d_w = np.zeros_like(W)
    d_u = np.zeros_like(U)
    d_b = np.zeros(W.shape[0])
    carry_h = np.zeros((n_batch, h_dim))
    carry_c = np.zeros((n_batch, h_dim))
    for t in range(t_len - 1, -1, -1):
        dh = d_hs[:, t] + carry_h
        i = gates[:, t, :h_dim]
        f = gates[:, t, h_dim : 2 * h_dim]
        g = gates[:, t, 2 * h_dim : 3 * h_dim]
        o = gates[:, t, 3 * h_dim :]
        tc = np.tanh(cs[:, t + 1])
        do = dh * tc
        dc = carry_c + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * cs[:, t]
        carry_c = dc * f
        d_pre = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        d_w += d_pre.T @ x[:, t]
        d_u += d_pre.T @ hs[:, t]
        d_b += d_pre.sum(axis=0)
        carry_h = d_pre @ U
    return {prefix + "W": d_w, prefix + "U": d_u, prefix + "b": d_b}


_FORWARD = {"gru": _gru_forward, "lstm": _lstm_forward}
_BACKWARD = {"gru": _gru_backward, "lstm": _lstm_backward}


def _cell_inputs(model: RnnModel, x_full, cell_index):
    """Assemble the input slab for one cell from the padded (B, T, F + S')."""
    if not model.per_feature:
        return x_full
    n_f = model.n_features
    feat = x_full[:, :, cell_index : cell_index + 1]
    statics = x_full[:, :, n_f:]
    return np.concatenate([feat, statics], axis=2)


def forward(model: RnnModel, x_full, lengths=None):
    """Run all cells over a padded batch (B, T, F + S').

    Returns (hidden, preds, caches): hidden is (B, T+1, n_cells * H) with the
    zero initial state first; preds is (B, T-1, F), the readout of h_t
    aligned to target x_{t+1} (series slots only).
    """
    n_batch, t_len, _ = x_full.shape
    hs_all, preds_all, caches = [], [], []
    for c in range(model.n_cells):
        prefix = f"f{c}." if model.per_feature else ""
        x = _cell_inputs(model, x_full, c)
        hs, cache = _FORWARD[model.cell](model.params, prefix, x)
        w_out, b_out = model.params[prefix + "W_out"], model.params[prefix + "b_out"]
        if t_len > 1:
            preds = hs[:, 1:t_len] @ w_out.T + b_out  # (B, T-1, out)
        else:
            preds = np.zeros((n_batch, 0, w_out.shape[0]))
        hs_all.append(hs)
        preds_all.append(preds)
        caches.append((x, hs, cache))
    hidden = np.concatenate(hs_all, axis=2)
    preds = np.concatenate(preds_all, axis=2)
    if not np.isfinite(hidden).all():
        raise NonFiniteActivation("non-finite hidden state in forward pass")
    return hidden, preds, caches


def forward_stay(model: RnnModel, inputs):
    """Single-stay convenience: inputs (T, F + S') -> (hidden (T, d), preds (T-1, F))."""
    hidden, preds, _ = forward(model, inputs[None, :, :])
    return hidden[0, 1:], preds[0]


def loss_mse(predictions, targets):
    """Mean over all prediction cells."""
    predictions = np.asarray(predictions, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if predictions.shape != targets.shape:
        raise ValueError(f"shape mismatch {predictions.shape} vs {targets.shape}")
    diff = predictions - targets
    return float((diff * diff).mean())


def _prediction_mask(lengths, t_len, n_batch):
    """(B, T-1) mask of valid prediction steps: step t targets x_{t+1}."""
    steps = np.arange(t_len - 1)[None, :]
    return steps < (np.asarray(lengths)[:, None] - 1)


def batch_loss(model: RnnModel, x_full, lengths):
    """Mean over stays of each stay's per-cell MSE (loss used in training)."""
    _, preds, _ = forward(model, x_full, lengths)
    return _batch_loss_from_preds(model, preds, x_full, lengths)[0]


def _batch_loss_from_preds(model, preds, x_full, lengths):
    n_batch, t_len, _ = x_full.shape
    targets = x_full[:, 1:, : model.n_features]
    valid = _prediction_mask(lengths, t_len, n_batch)  # (B, T-1)
    cells = (np.asarray(lengths) - 1).clip(min=0) * model.n_features
    resid = np.where(valid[:, :, None], preds - targets, 0.0)
    per_stay = (resid * resid).sum(axis=(1, 2)) / np.maximum(cells, 1)
    included = cells > 0
    loss = float(per_stay[included].mean()) if included.any() else 0.0
    return loss, resid, cells, included


def backward(model: RnnModel, x_full, lengths, loss_scale=1.0):
    """Exact BPTT gradients of the batch-mean MSE. Returns (loss, grads).

    Stays with no prediction horizon (T = 1) contribute nothing; the batch
    mean runs over the remaining stays. loss_scale multiplies the objective
    (and so every gradient) uniformly.
    """
    n_batch, t_len, _ = x_full.shape
    hidden, preds, caches = forward(model, x_full, lengths)
    loss, resid, cells, included = _batch_loss_from_preds(model, preds, x_full, lengths)
    loss *= loss_scale
    n_active = int(included.sum())
    if n_active == 0:
        return loss, {k: np.zeros_like(v) for k, v in model.params.items()}
    # d loss / d pred for each cell: 2 * resid / (cells_p * n_active)
    weight = np.where(included, loss_scale / (np.maximum(cells, 1) * n_active), 0.0)
    d_preds = 2.0 * resid * weight[:, None, None]  # (B, T-1, F)

    grads = {}
    h_dim = model.hidden_size
    for c in range(model.n_cells):
        prefix = f"f{c}." if model.per_feature else ""
        x, hs, cache = caches[c]
        w_out = model.params[prefix + "W_out"]
        out_lo = c if model.per_feature else 0
        out_hi = c + 1 if model.per_feature else model.n_features
        d_p = d_preds[:, :, out_lo:out_hi]  # (B, T-1, out)
        if t_len > 1:
            h_used = hs[:, 1:t_len]
            grads[prefix + "W_out"] = np.einsum("bto,bth->oh", d_p, h_used)
            grads[prefix + "b_out"] = d_p.sum(axis=(0, 1))
            d_hs = np.zeros((n_batch, t_len, h_dim))
            d_hs[:, : t_len - 1] = d_p @ w_out
        else:
            grads[prefix + "W_out"] = np.zeros_like(w_out)
            grads[prefix + "b_out"] = np.zeros_like(model.params[prefix + "b_out"])
            d_hs = np.zeros((n_batch, t_len, h_dim))
        grads.update(_BACKWARD[model.cell](model.params, prefix, x, hs, cache, d_hs))

    for key, g in grads.items():
        if not np.isfinite(g).all():
            raise NonFiniteGradient(f"non-finite gradient for {key}")
    return loss, grads


def clip_gradients(grads, max_norm):
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm and total > max_norm:
        scale = max_norm / total
        return {k: g * scale for k, g in grads.items()}, total
    return grads, total


def init_adamw_state(params):
    return {
        "step": 0,
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
    }


def adamw_step(params, grads, state, config: RnnConfig):
    """One AdamW update in place: Adam moments with bias correction plus
    decoupled weight decay applied to the pre-update parameters."""
    state["step"] += 1
    t = state["step"]
    b1, b2 = config.beta1, config.beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    for key, theta in params.items():
        g = grads[key]
        m = state["m"][key]
        v = state["v"][key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / bias1
        v_hat = v / bias2
        theta -= config.learning_rate * (
            m_hat / (np.sqrt(v_hat) + config.eps) + config.weight_decay * theta
        )
    return params, state


@dataclass
class StayTensors:
    """Padded batch tensors for a cohort: inputs are [series | statics]."""

    stay_ids: list[str]
    x: np.ndarray  # (N, T_max, F + S')
    lengths: np.ndarray  # (N,)
    n_features: int
    static_width: int


def build_tensors(cohort: Cohort) -> StayTensors:
    if not cohort.stays:
        raise EmptySeries("cohort has no stays")
    n_feat = len(cohort.feature_names)
    static_width = len(cohort.stays[0].statics)
    t_max = max(s.series.shape[0] for s in cohort.stays)
    x = np.zeros((len(cohort.stays), t_max, n_feat + static_width))
    lengths = np.zeros(len(cohort.stays), dtype=int)
    for i, stay in enumerate(cohort.stays):
        t_len = stay.series.shape[0]
        if t_len == 0:
            raise EmptySeries(f"stay {stay.stay_id!r} has an empty series")
        x[i, :t_len, :n_feat] = stay.series
        x[i, :t_len, n_feat:] = np.asarray(stay.statics, dtype=float)[None, :]
        lengths[i] = t_len
    return StayTensors(cohort.stay_ids(), x, lengths, n_feat, static_width)


def train(cohort: Cohort, split_assignment: dict, config: RnnConfig):
    """Train on the train split, tracking train/val MSE per epoch.

    Batch order is a pure function of (seed, epoch, stay_id), so training is
    invariant to input-file order. Returns (model, curve) where curve is a
    list of (epoch, train_mse, val_mse) tuples.
    """
    config.validate()
    tensors = build_tensors(cohort)
    idx_by_id = {sid: i for i, sid in enumerate(tensors.stay_ids)}
    train_ids = [
        sid
        for sid in tensors.stay_ids
        if split_assignment[sid] == "train" and tensors.lengths[idx_by_id[sid]] >= 2
    ]
    val_ids = [
        sid
        for sid in tensors.stay_ids
        if split_assignment[sid] == "val" and tensors.lengths[idx_by_id[sid]] >= 2
    ]
    if not train_ids:
        raise EmptySeries("no train stays with a prediction horizon")

    model = init_model(config, tensors.n_features, tensors.static_width, config.seed)
    state = init_adamw_state(model.params)
    curve = []
    for epoch in range(1, config.epochs + 1):
        order = sorted(train_ids, key=lambda sid: stable_hash64(config.seed, "shuffle", epoch, sid))
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch_ids = order[start : start + config.batch_size]
            rows = [idx_by_id[sid] for sid in batch_ids]
            xb = tensors.x[rows]
            lb = tensors.lengths[rows]
            loss, grads = backward(model, xb, lb)
            grads, _ = clip_gradients(grads, config.grad_clip_norm)
            adamw_step(model.params, grads, state, config)
            total += loss * len(batch_ids)
            count += len(batch_ids)
        train_mse = total / count
        val_mse = evaluate_mse(model, tensors, val_ids, config.batch_size) if val_ids else float("nan")
        if not np.isfinite(train_mse):
            raise DivergedLoss(f"non-finite train loss at epoch {epoch}")
        curve.append((epoch, train_mse, val_mse))
    return model, curve


def evaluate_mse(model: RnnModel, tensors: StayTensors, stay_ids, batch_size=256):
    idx_by_id = {sid: i for i, sid in enumerate(tensors.stay_ids)}
    losses, weights = [], []
    for start in range(0, len(stay_ids), batch_size):
        rows = [idx_by_id[sid] for sid in stay_ids[start : start + batch_size]]
        loss = batch_loss(model, tensors.x[rows], tensors.lengths[rows])
        losses.append(loss)
        weights.append(len(rows))
    if not losses:
        return float("nan")
    return float(np.average(losses, weights=weights))


def embed_rnn(model: RnnModel, cohort: Cohort, batch_size=256) -> EmbeddingMatrix:
    """Embedding = hidden state after the last observed timestep, concatenated
    across cells in per-feature mode."""
    tensors = build_tensors(cohort)
    vecs = np.zeros((len(tensors.stay_ids), model.embedding_dim))
    for start in range(0, len(tensors.stay_ids), batch_size):
        rows = slice(start, min(start + batch_size, len(tensors.stay_ids)))
        xb = tensors.x[rows]
        lb = tensors.lengths[rows]
        hidden, _, _ = forward(model, xb, lb)
        vecs[rows] = hidden[np.arange(xb.shape[0]), lb, :]
    return EmbeddingMatrix(stay_ids=list(tensors.stay_ids), vectors=vecs, provenance=model.cell)


def save_model(model: RnnModel, path, provenance=None):
    payload = {
        "format_version": 1,
        "cell": model.cell,
        "hidden_size": model.hidden_size,
        "n_features": model.n_features,
        "static_width": model.static_width,
        "per_feature": model.per_feature,
        "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in model.params.items()},
    }
    if provenance:
        payload["provenance"] = provenance
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_model(path) -> RnnModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    model = RnnModel(
        cell=payload["cell"],
        hidden_size=payload["hidden_size"],
        n_features=payload["n_features"],
        static_width=payload["static_width"],
        per_feature=payload["per_feature"],
    )
    for key, spec in payload["params"].items():
        model.params[key] = np.array(spec["data"], dtype=float).reshape(spec["shape"])
    return model
