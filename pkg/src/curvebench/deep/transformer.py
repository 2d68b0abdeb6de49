"""Transformer encoder regressor with exact reverse-mode gradients.

Post-norm blocks: x = LN(x + MHA(x)), then x = LN(x + FFN(x)). Sinusoidal
positional encodings are added after the input projection; the pooled head
is a mean over sequence positions followed by an affine map.
"""
from __future__ import annotations

import numpy as np

LN_EPS = 1e-5


def positional_encoding(length: int, d_model: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    dim = np.arange(0, d_model, 2)[None, :]
    angle = pos / np.power(10000.0, dim / d_model)
    table = np.zeros((length, d_model))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return table


def init_transformer(d: int, d_model: int = 128, heads: int = 8, blocks: int = 2,
                     d_ff: int = 256, seed: int = 0) -> dict[str, np.ndarray]:
    if d_model % heads != 0:
        raise ValueError("d_model must be divisible by the head count")
    rng = np.random.default_rng(seed)

    def u(fan_in, shape):
        s = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-s, s, shape)

    params: dict[str, np.ndarray] = {
        "W_in": u(d, (d, d_model)), "b_in": np.zeros(d_model),
        "W_head": u(d_model, d_model), "b_head": np.zeros(1),
        "_meta": np.array([d_model, heads, blocks, d_ff], dtype=np.float64),
    }
    for k in range(blocks):
        for name in ("Wq", "Wk", "Wv", "Wo"):
            params[f"{name}{k}"] = u(d_model, (d_model, d_model))
            params[f"b{name[1]}{k}"] = np.zeros(d_model)
        params[f"ln1g{k}"] = np.ones(d_model)
        params[f"ln1b{k}"] = np.zeros(d_model)
        params[f"W1{k}"] = u(d_model, (d_model, d_ff))
        params[f"b1{k}"] = np.zeros(d_ff)
        params[f"W2{k}"] = u(d_ff, (d_ff, d_model))
        params[f"b2{k}"] = np.zeros(d_model)
        params[f"ln2g{k}"] = np.ones(d_model)
        params[f"ln2b{k}"] = np.zeros(d_model)
    return params


def _layernorm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv)


def _layernorm_backward(dout, g, ln_cache):
    xhat, inv = ln_cache
    dg = (dout * xhat).sum(axis=tuple(range(dout.ndim - 1)))
    db = dout.sum(axis=tuple(range(dout.ndim - 1)))
    dxhat = dout * g
    n = xhat.shape[-1]
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def _softmax(scores):
    m = scores.max(axis=-1, keepdims=True)
    e = np.exp(scores - m)
    return e / e.sum(axis=-1, keepdims=True)


def transformer_forward(params: dict[str, np.ndarray], X: np.ndarray,
                        use_positional: bool = True):
    """Encode a (B, L, d) batch and regress a scalar per window.

    Returns (yhat of shape (B,), cache). The cache stores every attention
    matrix, so row-stochasticity can be inspected as
    ``cache['blocks'][k]['attn']``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    B, L, _ = X.shape
    d_model, heads, blocks, _ = (int(v) for v in params["_meta"])
    dk = d_model // heads

    h = X @ params["W_in"] + params["b_in"]
    if use_positional:
        h = h + positional_encoding(L, d_model)
    cache = {"X": X, "blocks": [], "use_positional": use_positional}

    for k in range(blocks):
        blk = {"h_in": h}
        Q = h @ params[f"Wq{k}"] + params[f"bq{k}"]
        K = h @ params[f"Wk{k}"] + params[f"bk{k}"]
        V = h @ params[f"Wv{k}"] + params[f"bv{k}"]
        # (B, L, d_model) -> (B, heads, L, dk)
        Qh = Q.reshape(B, L, heads, dk).transpose(0, 2, 1, 3)
        Kh = K.reshape(B, L, heads, dk).transpose(0, 2, 1, 3)
        Vh = V.reshape(B, L, heads, dk).transpose(0, 2, 1, 3)
        scores = Qh @ Kh.transpose(0, 1, 3, 2) / np.sqrt(dk)
        attn = _softmax(scores)
        ctx = (attn @ Vh).transpose(0, 2, 1, 3).reshape(B, L, d_model)
        attn_out = ctx @ params[f"Wo{k}"] + params[f"bo{k}"]
        res1 = h + attn_out
        h1, ln1_cache = _layernorm(res1, params[f"ln1g{k}"], params[f"ln1b{k}"])
        pre = h1 @ params[f"W1{k}"] + params[f"b1{k}"]
        act = np.maximum(pre, 0.0)
        ff = act @ params[f"W2{k}"] + params[f"b2{k}"]
        res2 = h1 + ff
        h2, ln2_cache = _layernorm(res2, params[f"ln2g{k}"], params[f"ln2b{k}"])
        blk.update(Qh=Qh, Kh=Kh, Vh=Vh, attn=attn, ctx=ctx, h1=h1, pre=pre,
                   act=act, ln1=ln1_cache, ln2=ln2_cache)
        cache["blocks"].append(blk)
        h = h2

    pooled = h.mean(axis=1)
    yhat = pooled @ params["W_head"][:, 0] if params["W_head"].ndim == 2 else pooled @ params["W_head"]
    yhat = yhat + params["b_head"][0]
    cache["pooled"] = pooled
    cache["L"] = L
    return yhat, cache


def transformer_backward(params: dict[str, np.ndarray], cache: dict,
                         dy: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of sum(dy * yhat) w.r.t. every parameter."""
    dy = np.asarray(dy, dtype=np.float64)
    X = cache["X"]
    B, L, _ = X.shape
    d_model, heads, blocks, _ = (int(v) for v in params["_meta"])
    dk = d_model // heads
    w_head = params["W_head"][:, 0] if params["W_head"].ndim == 2 else params["W_head"]

    grads: dict[str, np.ndarray] = {
        "W_head": cache["pooled"].T @ dy,
        "b_head": np.array([dy.sum()]),
    }
    if params["W_head"].ndim == 2:
        grads["W_head"] = grads["W_head"][:, None]
    dpooled = dy[:, None] * w_head[None, :]
    dh = np.repeat(dpooled[:, None, :], L, axis=1) / L

    for k in range(blocks - 1, -1, -1):
        blk = cache["blocks"][k]
        dres2, dg, db = _layernorm_backward(dh, params[f"ln2g{k}"], blk["ln2"])
        grads[f"ln2g{k}"] = dg
        grads[f"ln2b{k}"] = db
        dff = dres2
        grads[f"W2{k}"] = np.einsum("blf,blm->fm", blk["act"], dff)
        grads[f"b2{k}"] = dff.sum(axis=(0, 1))
        dact = dff @ params[f"W2{k}"].T
        dpre = dact * (blk["pre"] > 0)
        grads[f"W1{k}"] = np.einsum("blm,blf->mf", blk["h1"], dpre)
        grads[f"b1{k}"] = dpre.sum(axis=(0, 1))
        dh1 = dres2 + dpre @ params[f"W1{k}"].T

        dres1, dg, db = _layernorm_backward(dh1, params[f"ln1g{k}"], blk["ln1"])
        grads[f"ln1g{k}"] = dg
        grads[f"ln1b{k}"] = db
        dattn_out = dres1
        grads[f"Wo{k}"] = np.einsum("blm,bln->mn", blk["ctx"], dattn_out)
        grads[f"bo{k}"] = dattn_out.sum(axis=(0, 1))
        dctx = (dattn_out @ params[f"Wo{k}"].T).reshape(B, L, heads, dk).transpose(0, 2, 1, 3)

        attn, Qh, Kh, Vh = blk["attn"], blk["Qh"], blk["Kh"], blk["Vh"]
        dattn = dctx @ Vh.transpose(0, 1, 3, 2)
        dVh = attn.transpose(0, 1, 3, 2) @ dctx
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        dscores /= np.sqrt(dk)
        dQh = dscores @ Kh
        dKh = dscores.transpose(0, 1, 3, 2) @ Qh

        dQ = dQh.transpose(0, 2, 1, 3).reshape(B, L, d_model)
        dK = dKh.transpose(0, 2, 1, 3).reshape(B, L, d_model)
        dV = dVh.transpose(0, 2, 1, 3).reshape(B, L, d_model)
        h_in = blk["h_in"]
        grads[f"Wq{k}"] = np.einsum("blm,bln->mn", h_in, dQ)
        grads[f"bq{k}"] = dQ.sum(axis=(0, 1))
        grads[f"Wk{k}"] = np.einsum("blm,bln->mn", h_in, dK)
        grads[f"bk{k}"] = dK.sum(axis=(0, 1))
        grads[f"Wv{k}"] = np.einsum("blm,bln->mn", h_in, dV)
        grads[f"bv{k}"] = dV.sum(axis=(0, 1))
        dh = (dres1 + dQ @ params[f"Wq{k}"].T + dK @ params[f"Wk{k}"].T
              + dV @ params[f"Wv{k}"].T)

    grads["W_in"] = np.einsum("bld,blm->dm", X, dh)
    grads["b_in"] = dh.sum(axis=(0, 1))
    return grads
