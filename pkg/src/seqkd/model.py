"""Attention GRU encoder-decoder with hand-written exact gradients.

The network is a single-layer bidirectional GRU encoder, additive attention,
and a single-layer GRU decoder, all in float64 numpy.  The GRU variant used
throughout (update gate z, reset gate r, candidate c):

    z = sigmoid(x Wz + h Uz + bz)
    r = sigmoid(x Wr + h Ur + br)
    c = tanh(x Wc + (r * h) Uc + bc)
    h' = (1 - z) * h + z * c

Attention scores at decode step t use the decoder state entering the step:
e_j = v . tanh(s W_s + h_j U_h); the context vector feeds the decoder GRU
together with the previous target embedding, and the output projection reads
the updated state.  The decoder initial state is tanh(W_init . h_bwd[0]).

``loss_and_gradients`` backpropagates through all of the above by hand; the
test suite checks every path against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericsError
from .textcore import BOS_ID, EOS_ID

INIT_WEIGHT_RANGE = 0.08


@dataclass(frozen=True)
class ModelDims:
    src_vocab: int
    tgt_vocab: int
    embed_dim: int
    hidden_dim: int

    def __post_init__(self):
        for name in ("src_vocab", "tgt_vocab", "embed_dim", "hidden_dim"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    def as_dict(self):
        return {
            "src_vocab": self.src_vocab,
            "tgt_vocab": self.tgt_vocab,
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
        }


_CELLS = ("enc_fwd", "enc_bwd", "dec")
_GATES = ("z", "r", "c")


def param_shapes(dims: ModelDims) -> dict[str, tuple]:
    """Canonical name -> shape map; the order fixes init and file layout."""
    vs, vt, e, h = dims.src_vocab, dims.tgt_vocab, dims.embed_dim, dims.hidden_dim
    cell_input = {"enc_fwd": e, "enc_bwd": e, "dec": e + 2 * h}
    shapes: dict[str, tuple] = {
        "src_embed": (vs, e),
        "tgt_embed": (vt, e),
    }
    for cell in _CELLS:
        d = cell_input[cell]
        for g in _GATES:
            shapes[f"{cell}_W{g}"] = (d, h)
        for g in _GATES:
            shapes[f"{cell}_U{g}"] = (h, h)
        for g in _GATES:
            shapes[f"{cell}_b{g}"] = (h,)
    shapes["att_Ws"] = (h, h)
    shapes["att_Uh"] = (2 * h, h)
    shapes["att_v"] = (h,)
    shapes["init_W"] = (h, h)
    shapes["init_b"] = (h,)
    shapes["out_W"] = (h, vt)
    shapes["out_b"] = (vt,)
    return shapes


def _is_bias(name: str) -> bool:
    return name.endswith(("_bz", "_br", "_bc", "init_b", "out_b"))


class ModelParams:
    """Named float64 tensors for one model; shapes fixed by ModelDims."""

    def __init__(self, dims: ModelDims, tensors: dict[str, np.ndarray]):
        expected = param_shapes(dims)
        if set(tensors) != set(expected):
            missing = sorted(set(expected) - set(tensors))
            extra = sorted(set(tensors) - set(expected))
            raise DataError(f"parameter name mismatch: missing={missing} extra={extra}")
        for name, shape in expected.items():
            t = tensors[name]
            if t.shape != shape:
                raise DataError(f"tensor {name}: expected shape {shape}, got {t.shape}")
            if t.dtype != np.float64:
                raise DataError(f"tensor {name}: expected float64, got {t.dtype}")
        self.dims = dims
        self._tensors = {name: tensors[name] for name in expected}

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if self._tensors[name].shape != value.shape:
            raise DataError(f"tensor {name}: shape change not allowed")
        self._tensors[name] = value

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def copy(self) -> "ModelParams":
        return ModelParams(self.dims, {n: t.copy() for n, t in self._tensors.items()})

    def allclose(self, other: "ModelParams", tol: float = 0.0) -> bool:
        return self.dims == other.dims and all(
            np.allclose(t, other[n], rtol=0.0, atol=tol) for n, t in self.items()
        )


def init_params(dims: ModelDims, seed: int) -> ModelParams:
    """Weights uniform in (-0.08, 0.08) from a seeded generator, biases zero."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(dims).items():
        if _is_bias(name):
            tensors[name] = np.zeros(shape)
        else:
            tensors[name] = rng.uniform(-INIT_WEIGHT_RANGE, INIT_WEIGHT_RANGE, shape)
    return ModelParams(dims, tensors)


def zero_params(dims: ModelDims) -> ModelParams:
    return ModelParams(dims, {n: np.zeros(s) for n, s in param_shapes(dims).items()})


def _sigmoid(x):
    # tanh form avoids exp overflow for large magnitudes
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


class _Cell:
    """Packed GRU weights for one cell (gate matrices concatenated)."""

    def __init__(self, params: ModelParams, prefix: str):
        self.W = np.concatenate(
            [params[f"{prefix}_Wz"], params[f"{prefix}_Wr"], params[f"{prefix}_Wc"]],
            axis=1,
        )
        self.U_zr = np.concatenate(
            [params[f"{prefix}_Uz"], params[f"{prefix}_Ur"]], axis=1
        )
        self.Uc = params[f"{prefix}_Uc"]
        self.b = np.concatenate(
            [params[f"{prefix}_bz"], params[f"{prefix}_br"], params[f"{prefix}_bc"]]
        )
        self.hidden = self.Uc.shape[0]


class _CellGrads:
    def __init__(self, cell: _Cell):
        self.W = np.zeros_like(cell.W)
        self.U_zr = np.zeros_like(cell.U_zr)
        self.Uc = np.zeros_like(cell.Uc)
        self.b = np.zeros_like(cell.b)

    def unpack(self, grads: dict, prefix: str, h: int):
        grads[f"{prefix}_Wz"] = self.W[:, :h]
        grads[f"{prefix}_Wr"] = self.W[:, h : 2 * h]
        grads[f"{prefix}_Wc"] = self.W[:, 2 * h :]
        grads[f"{prefix}_Uz"] = self.U_zr[:, :h]
        grads[f"{prefix}_Ur"] = self.U_zr[:, h:]
        grads[f"{prefix}_Uc"] = self.Uc
        grads[f"{prefix}_bz"] = self.b[:h]
        grads[f"{prefix}_br"] = self.b[h : 2 * h]
        grads[f"{prefix}_bc"] = self.b[2 * h :]


def _gru_forward(cell: _Cell, x, h):
    hdim = cell.hidden
    axw = x @ cell.W + cell.b
    ah = h @ cell.U_zr
    z = _sigmoid(axw[:, :hdim] + ah[:, :hdim])
    r = _sigmoid(axw[:, hdim : 2 * hdim] + ah[:, hdim:])
    rh = r * h
    c = np.tanh(axw[:, 2 * hdim :] + rh @ cell.Uc)
    h_new = (1.0 - z) * h + z * c
    return h_new, (x, h, z, r, rh, c)


def _gru_backward(cell: _Cell, cgrads: _CellGrads, dh_new, cache):
    x, h, z, r, rh, c = cache
    dz = dh_new * (c - h)
    dc = dh_new * z
    dh = dh_new * (1.0 - z)
    dac = dc * (1.0 - c * c)
    cgrads.Uc += rh.T @ dac
    drh = dac @ cell.Uc.T
    dh += drh * r
    dr = drh * h
    dar = dr * r * (1.0 - r)
    daz = dz * z * (1.0 - z)
    da_zr = np.concatenate([daz, dar], axis=1)
    da = np.concatenate([da_zr, dac], axis=1)
    cgrads.W += x.T @ da
    cgrads.U_zr += h.T @ da_zr
    cgrads.b += da.sum(axis=0)
    dx = da @ cell.W.T
    dh += da_zr @ cell.U_zr.T
    return dx, dh


class PackedModel:
    """Read-only packed view of a parameter set for fast repeated passes."""

    def __init__(self, params: ModelParams):
        self.dims = params.dims
        self.src_embed = params["src_embed"]
        self.tgt_embed = params["tgt_embed"]
        self.enc_fwd = _Cell(params, "enc_fwd")
        self.enc_bwd = _Cell(params, "enc_bwd")
        self.dec = _Cell(params, "dec")
        self.att_Ws = params["att_Ws"]
        self.att_Uh = params["att_Uh"]
        self.att_v = params["att_v"]
        self.init_W = params["init_W"]
        self.init_b = params["init_b"]
        self.out_W = params["out_W"]
        self.out_b = params["out_b"]


def _encode(pm: PackedModel, src, smask, want_cache=False):
    """Run both encoder directions over a padded batch.

    Masked steps keep the previous state so right padding is inert; the
    attention mask removes padded positions from every later read.
    """
    b, s = src.shape
    h = pm.dims.hidden_dim
    xs = pm.src_embed[src]
    fwd = np.empty((b, s, h))
    bwd = np.empty((b, s, h))
    caches_f, caches_b = [], []
    state = np.zeros((b, h))
    for t in range(s):
        new, cache = _gru_forward(pm.enc_fwd, xs[:, t], state)
        m = smask[:, t : t + 1]
        state = m * new + (1.0 - m) * state
        fwd[:, t] = state
        if want_cache:
            caches_f.append(cache)
    state = np.zeros((b, h))
    for t in range(s - 1, -1, -1):
        new, cache = _gru_forward(pm.enc_bwd, xs[:, t], state)
        m = smask[:, t : t + 1]
        state = m * new + (1.0 - m) * state
        bwd[:, t] = state
        if want_cache:
            caches_b.append(cache)  # stored in processing order s-1..0
    h_enc = np.concatenate([fwd, bwd], axis=2)
    uah = h_enc @ pm.att_Uh
    s0_pre = bwd[:, 0] @ pm.init_W + pm.init_b
    s0 = np.tanh(s0_pre)
    cache = (xs, caches_f, caches_b, bwd[:, 0].copy(), s0) if want_cache else None
    return h_enc, uah, s0, cache


def _attend(pm: PackedModel, s_prev, h_enc, uah, smask):
    q = s_prev @ pm.att_Ws
    u = np.tanh(q[:, None, :] + uah)
    e = u @ pm.att_v
    # masked positions become -inf before the shift, so they exp to exactly 0
    # and can neither overflow nor underflow the valid scores
    valid = np.where(smask > 0, e, -np.inf)
    ex = np.exp(valid - valid.max(axis=1, keepdims=True))
    alpha = ex / ex.sum(axis=1, keepdims=True)
    context = (alpha[:, :, None] * h_enc).sum(axis=1)
    return alpha, u, context


def _output_dist(pm: PackedModel, state):
    logits = state @ pm.out_W + pm.out_b
    shift = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(shift)
    return ez / ez.sum(axis=1, keepdims=True)


def _check_ids(ids, limit, what):
    arr = np.asarray(ids, dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= limit):
        raise DataError(f"{what} token id out of range [0, {limit})")
    return arr


def forward_logprobs(params: ModelParams, source, target_prefix) -> np.ndarray:
    """Teacher-forced per-step output distributions.

    Returns an array of shape (len(target_prefix) + 1, tgt_vocab): row t is
    the distribution after consuming <s> and the first t prefix tokens.
    """
    session = DecoderSession(PackedModel(params), source)
    prefix = _check_ids(target_prefix, params.dims.tgt_vocab, "target")
    state = session.start_states(1)
    y_prev = np.array([BOS_ID])
    rows = []
    for t in range(len(prefix) + 1):
        probs, state = session.step(state, y_prev)
        rows.append(probs[0])
        if t < len(prefix):
            y_prev = prefix[t : t + 1]
    return np.stack(rows)


class DecoderSession:
    """Encoder outputs plus packed weights for one source sentence.

    Immutable; `step` is a pure function of (states, previous tokens), so a
    session can drive any number of hypotheses or beams concurrently.
    """

    def __init__(self, pm: PackedModel, source):
        src = _check_ids(source, pm.dims.src_vocab, "source")
        if src.size == 0:
            raise DataError("cannot decode an empty source sentence")
        self.pm = pm
        self.src_len = int(src.size)
        smask = np.ones((1, self.src_len))
        self.smask = smask
        self.h_enc, self.uah, self.s0, _ = _encode(pm, src[None, :], smask)

    def start_states(self, k: int) -> np.ndarray:
        return np.repeat(self.s0, k, axis=0)

    def step(self, states, y_prev):
        """One decode step for k hypotheses: (k,) ids -> (k, V) probs, new states."""
        pm = self.pm
        _, _, context = _attend(pm, states, self.h_enc, self.uah, self.smask)
        x = np.concatenate([pm.tgt_embed[y_prev], context], axis=1)
        new_states, _ = _gru_forward(pm.dec, x, states)
        return _output_dist(pm, new_states), new_states


def _pad_batch(batch, dims: ModelDims):
    b = len(batch)
    src_lens = []
    tgt_lens = []
    for src, tgt in batch:
        if len(src) == 0:
            raise DataError("empty source sentence in batch")
        src_lens.append(len(src))
        tgt_lens.append(len(tgt))
    s = max(src_lens)
    t = max(tgt_lens) + 1  # one extra step for </s>
    src_ids = np.zeros((b, s), dtype=np.int64)
    smask = np.zeros((b, s))
    y_in = np.zeros((b, t), dtype=np.int64)
    y_out = np.zeros((b, t), dtype=np.int64)
    tmask = np.zeros((b, t))
    for i, (src, tgt) in enumerate(batch):
        sl, tl = src_lens[i], tgt_lens[i]
        src_ids[i, :sl] = _check_ids(src, dims.src_vocab, "source")
        smask[i, :sl] = 1.0
        tgt_arr = _check_ids(tgt, dims.tgt_vocab, "target")
        y_in[i, 0] = BOS_ID
        y_in[i, 1 : tl + 1] = tgt_arr
        y_out[i, :tl] = tgt_arr
        y_out[i, tl] = EOS_ID
        tmask[i, : tl + 1] = 1.0
    return src_ids, smask, y_in, y_out, tmask


def loss_and_gradients(params: ModelParams, batch):
    """Mean token cross-entropy and exact gradients for a batch of pairs.

    ``batch`` is a sequence of (source_ids, target_ids) pairs; targets are
    framed as <s> y .. </s> with teacher forcing.  Raises NumericsError
    naming the first non-finite tensor.
    """
    if len(batch) == 0:
        raise DataError("batch must be non-empty")
    dims = params.dims
    e, h = dims.embed_dim, dims.hidden_dim
    pm = PackedModel(params)
    src, smask, y_in, y_out, tmask = _pad_batch(batch, dims)
    b, s = src.shape
    t_steps = y_in.shape[1]
    n_tokens = tmask.sum()

    h_enc, uah, s0, enc_cache = _encode(pm, src, smask, want_cache=True)
    xs, caches_f, caches_b, hb0, s0_full = enc_cache

    # ---- decoder forward ----
    state = s0
    step_caches = []
    loss_sum = 0.0
    rows = np.arange(b)
    for t in range(t_steps):
        alpha, u, context = _attend(pm, state, h_enc, uah, smask)
        emb = pm.tgt_embed[y_in[:, t]]
        x = np.concatenate([emb, context], axis=1)
        new_state, gru_cache = _gru_forward(pm.dec, x, state)
        logits = new_state @ pm.out_W + pm.out_b
        shift = logits - logits.max(axis=1, keepdims=True)
        ez = np.exp(shift)
        zsum = ez.sum(axis=1)
        probs = ez / zsum[:, None]
        step_loss = (np.log(zsum) - shift[rows, y_out[:, t]]) * tmask[:, t]
        loss_sum += step_loss.sum()
        step_caches.append((state, alpha, u, x, gru_cache, new_state, probs))
        state = new_state
    loss = loss_sum / n_tokens
    if not np.isfinite(loss):
        raise NumericsError("loss is not finite")

    # ---- backward ----
    grads: dict[str, np.ndarray] = {}
    cg = {name: _CellGrads(getattr(pm, name)) for name in _CELLS}
    d_att_Ws = np.zeros_like(pm.att_Ws)
    d_att_v = np.zeros_like(pm.att_v)
    d_init_W = np.zeros_like(pm.init_W)
    d_init_b = np.zeros_like(pm.init_b)
    d_out_W = np.zeros_like(pm.out_W)
    d_out_b = np.zeros_like(pm.out_b)
    d_tgt_embed = np.zeros_like(pm.tgt_embed)
    d_src_embed = np.zeros_like(pm.src_embed)
    dh_enc = np.zeros_like(h_enc)
    duah = np.zeros_like(uah)
    d_emb_steps = np.empty((b, t_steps, e))

    ds_carry = np.zeros((b, h))
    for t in range(t_steps - 1, -1, -1):
        s_prev, alpha, u, x, gru_cache, new_state, probs = step_caches[t]
        dlogits = probs.copy()
        dlogits[rows, y_out[:, t]] -= 1.0
        dlogits *= (tmask[:, t] / n_tokens)[:, None]
        d_out_W += new_state.T @ dlogits
        d_out_b += dlogits.sum(axis=0)
        ds_new = dlogits @ pm.out_W.T + ds_carry
        dx, ds_prev = _gru_backward(pm.dec, cg["dec"], ds_new, gru_cache)
        d_emb_steps[:, t] = dx[:, :e]
        dcontext = dx[:, e:]
        dalpha = (dcontext[:, None, :] * h_enc).sum(axis=2)
        dh_enc += alpha[:, :, None] * dcontext[:, None, :]
        de = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        dpre = de[:, :, None] * (1.0 - u * u) * pm.att_v
        d_att_v += np.einsum("bs,bsh->h", de, u)
        duah += dpre
        dq = dpre.sum(axis=1)
        d_att_Ws += s_prev.T @ dq
        ds_prev += dq @ pm.att_Ws.T
        ds_carry = ds_prev
    np.add.at(d_tgt_embed, y_in.ravel(), d_emb_steps.reshape(b * t_steps, e))

    # initial decoder state
    dpre0 = ds_carry * (1.0 - s0_full * s0_full)
    d_init_W += hb0.T @ dpre0
    d_init_b += dpre0.sum(axis=0)
    dhb0_extra = dpre0 @ pm.init_W.T

    # attention projection of encoder states
    d_att_Uh = np.tensordot(h_enc, duah, axes=([0, 1], [0, 1]))
    dh_enc += duah @ pm.att_Uh.T
    dhf = dh_enc[:, :, :h]
    dhb = dh_enc[:, :, h:].copy()
    dhb[:, 0] += dhb0_extra

    dxs = np.zeros((b, s, e))
    # forward encoder: states flow t-1 -> t, so walk back from the end
    dstate = np.zeros((b, h))
    for t in range(s - 1, -1, -1):
        dstate = dstate + dhf[:, t]
        m = smask[:, t : t + 1]
        dx, dprev = _gru_backward(pm.enc_fwd, cg["enc_fwd"], dstate * m, caches_f[t])
        dxs[:, t] += dx
        dstate = dprev + dstate * (1.0 - m)
    # backward encoder: states flow t+1 -> t, so walk back from index 0
    dstate = np.zeros((b, h))
    for t in range(s):
        dstate = dstate + dhb[:, t]
        m = smask[:, t : t + 1]
        cache = caches_b[s - 1 - t]  # caches stored in processing order
        dx, dprev = _gru_backward(pm.enc_bwd, cg["enc_bwd"], dstate * m, cache)
        dxs[:, t] += dx
        dstate = dprev + dstate * (1.0 - m)
    np.add.at(d_src_embed, src.ravel(), dxs.reshape(b * s, e))

    grads["src_embed"] = d_src_embed
    grads["tgt_embed"] = d_tgt_embed
    for name in _CELLS:
        cg[name].unpack(grads, name, h)
    grads["att_Ws"] = d_att_Ws
    grads["att_Uh"] = d_att_Uh
    grads["att_v"] = d_att_v
    grads["init_W"] = d_init_W
    grads["init_b"] = d_init_b
    grads["out_W"] = d_out_W
    grads["out_b"] = d_out_b

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericsError(f"gradient for tensor {name} is not finite")
    return float(loss), grads
