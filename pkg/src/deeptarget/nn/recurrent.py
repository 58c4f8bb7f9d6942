"""GRU and LSTM cells with hand-derived backpropagation through time.

Sequence arrays are laid out (T, B, width): time-major so each step is a
contiguous (B, width) block. Input-to-gate products are hoisted out of the
time loop; only the recurrent terms run per step. Backward passes replay
the taped forward exactly and accumulate into the cells' Param grads.

The GRU follows the original formulation with the reset gate applied
inside the candidate's recurrent term:

    z_t = sigmoid(Wz x_t + Uz h_{t-1} + bz)
    r_t = sigmoid(Wr x_t + Ur h_{t-1} + br)
    hc_t = tanh(W x_t + U (r_t * h_{t-1}) + b)
    h_t = (1 - z_t) * h_{t-1} + z_t * hc_t
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from .ops import sigmoid
from .params import ParamStore, glorot_uniform


@dataclass
class GruTape:
    """Forward activations cached for the backward pass."""

    cell: "GruCell"
    xs: np.ndarray      # (T, B, n_in)
    h0: np.ndarray      # (B, n_h)
    hs: np.ndarray      # (T, B, n_h)
    z: np.ndarray
    r: np.ndarray
    hc: np.ndarray
    rh: np.ndarray      # r * h_prev


class GruCell:
    """Gated recurrent unit over a (T, B, n_in) sequence batch."""

    def __init__(self, n_in: int, n_h: int, store: ParamStore, prefix: str,
                 rng: np.random.Generator):
        self.n_in = n_in
        self.n_h = n_h
        self.prefix = prefix
        gates = {}
        for gate in ("z", "r", "c"):
            gates[f"W{gate}"] = store.add(f"{prefix}.W{gate}", glorot_uniform(n_in, n_h, rng))
            gates[f"U{gate}"] = store.add(f"{prefix}.U{gate}", glorot_uniform(n_h, n_h, rng))
            gates[f"b{gate}"] = store.add(f"{prefix}.b{gate}", np.zeros(n_h))
        self.p = gates

    def _check_xs(self, xs: np.ndarray) -> tuple[int, int]:
        if xs.ndim != 3 or xs.shape[2] != self.n_in:
            raise ShapeError(f"{self.prefix}: expected (T, B, {self.n_in}) input, "
                             f"got {xs.shape}")
        return xs.shape[0], xs.shape[1]

    def forward(self, xs: np.ndarray, h0: np.ndarray | None = None) -> tuple[np.ndarray, GruTape]:
        T, B = self._check_xs(xs)
        h = np.zeros((B, self.n_h)) if h0 is None else np.asarray(h0, dtype=np.float64)
        if h.shape != (B, self.n_h):
            raise ShapeError(f"{self.prefix}: h0 shape {h.shape} != ({B}, {self.n_h})")
        p = self.p
        Wzr = np.concatenate([p["Wz"].value, p["Wr"].value], axis=1)
        Uzr = np.concatenate([p["Uz"].value, p["Ur"].value], axis=1)
        bzr = np.concatenate([p["bz"].value, p["br"].value])
        flat = xs.reshape(T * B, self.n_in)
        pre_zr = (flat @ Wzr + bzr).reshape(T, B, 2 * self.n_h)
        pre_c = (flat @ p["Wc"].value + p["bc"].value).reshape(T, B, self.n_h)
        Uc = p["Uc"].value

        hs = np.empty((T, B, self.n_h))
        z_all = np.empty_like(hs)
        r_all = np.empty_like(hs)
        hc_all = np.empty_like(hs)
        rh_all = np.empty_like(hs)
        h0_saved = h.copy()
        nh = self.n_h
        for t in range(T):
            zr = sigmoid(pre_zr[t] + h @ Uzr)
            z = zr[:, :nh]
            r = zr[:, nh:]
            rh = r * h
            hc = np.tanh(pre_c[t] + rh @ Uc)
            h = h + z * (hc - h)
            z_all[t] = z
            r_all[t] = r
            rh_all[t] = rh
            hc_all[t] = hc
            hs[t] = h
        return hs, GruTape(self, xs, h0_saved, hs, z_all, r_all, hc_all, rh_all)

    def backward(self, tape: GruTape, dhs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Reverse-mode gradients. Returns (dxs, dh0); accumulates into grads."""
        if tape.cell is not self:
            raise ShapeError("tape does not belong to this cell")
        if dhs.shape != tape.hs.shape:
            raise ShapeError(f"{self.prefix}: upstream gradient shape {dhs.shape} "
                             f"!= hidden states shape {tape.hs.shape}")
        T, B, nh = tape.hs.shape
        p = self.p
        Wzr = np.concatenate([p["Wz"].value, p["Wr"].value], axis=1)
        Uzr = np.concatenate([p["Uz"].value, p["Ur"].value], axis=1)
        Uc = p["Uc"].value

        dazr = np.empty((T, B, 2 * nh))
        dac = np.empty((T, B, nh))
        # gate derivative factors are independent of the carried gradient,
        # so hoist them out of the time loop
        sigd_z = tape.z * (1.0 - tape.z)
        sigd_r = tape.r * (1.0 - tape.r)
        tanhd = 1.0 - tape.hc * tape.hc
        UzrT = Uzr.T.copy()
        UcT = Uc.T.copy()
        dh = np.zeros((B, nh))
        for t in range(T - 1, -1, -1):
            dh = dh + dhs[t]
            h_prev = tape.hs[t - 1] if t > 0 else tape.h0
            z = tape.z[t]
            dhz = dh * z
            dz = dh * (tape.hc[t] - h_prev)
            dac_t = dhz * tanhd[t]
            drh = dac_t @ UcT
            dh_prev = dh - dhz
            dh_prev += drh * tape.r[t]
            dazr_t = dazr[t]
            np.multiply(dz, sigd_z[t], out=dazr_t[:, :nh])
            np.multiply(drh * h_prev, sigd_r[t], out=dazr_t[:, nh:])
            dh_prev += dazr_t @ UzrT
            dac[t] = dac_t
            dh = dh_prev

        flat_x = tape.xs.reshape(T * B, self.n_in)
        flat_azr = dazr.reshape(T * B, 2 * nh)
        flat_ac = dac.reshape(T * B, nh)
        h_prev_all = np.concatenate([tape.h0[None], tape.hs[:-1]], axis=0)
        flat_hp = h_prev_all.reshape(T * B, nh)
        flat_rh = tape.rh.reshape(T * B, nh)

        dWzr = flat_x.T @ flat_azr
        dUzr = flat_hp.T @ flat_azr
        dbzr = flat_azr.sum(axis=0)
        p["Wz"].grad += dWzr[:, :nh]
        p["Wr"].grad += dWzr[:, nh:]
        p["Uz"].grad += dUzr[:, :nh]
        p["Ur"].grad += dUzr[:, nh:]
        p["bz"].grad += dbzr[:nh]
        p["br"].grad += dbzr[nh:]
        p["Wc"].grad += flat_x.T @ flat_ac
        p["Uc"].grad += flat_rh.T @ flat_ac
        p["bc"].grad += flat_ac.sum(axis=0)

        dxs = (flat_azr @ Wzr.T + flat_ac @ p["Wc"].value.T).reshape(T, B, self.n_in)
        return dxs, dh


@dataclass
class LstmTape:
    cell: "LstmCell"
    xs: np.ndarray
    h0: np.ndarray
    c0: np.ndarray
    hs: np.ndarray
    cs: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    tc: np.ndarray      # tanh(c_t)


class LstmCell:
    """LSTM with gates i, f, o and cell candidate g; gate order [i, f, o, g]."""

    def __init__(self, n_in: int, n_h: int, store: ParamStore, prefix: str,
                 rng: np.random.Generator):
        self.n_in = n_in
        self.n_h = n_h
        self.prefix = prefix
        gates = {}
        for gate in ("i", "f", "o", "g"):
            gates[f"W{gate}"] = store.add(f"{prefix}.W{gate}", glorot_uniform(n_in, n_h, rng))
            gates[f"U{gate}"] = store.add(f"{prefix}.U{gate}", glorot_uniform(n_h, n_h, rng))
            gates[f"b{gate}"] = store.add(f"{prefix}.b{gate}", np.zeros(n_h))
        self.p = gates

    def _fused(self):
        p = self.p
        W = np.concatenate([p["Wi"].value, p["Wf"].value, p["Wo"].value, p["Wg"].value], axis=1)
        U = np.concatenate([p["Ui"].value, p["Uf"].value, p["Uo"].value, p["Ug"].value], axis=1)
        b = np.concatenate([p["bi"].value, p["bf"].value, p["bo"].value, p["bg"].value])
        return W, U, b

    def forward(self, xs: np.ndarray, h0: np.ndarray | None = None,
                c0: np.ndarray | None = None) -> tuple[np.ndarray, LstmTape]:
        if xs.ndim != 3 or xs.shape[2] != self.n_in:
            raise ShapeError(f"{self.prefix}: expected (T, B, {self.n_in}) input, "
                             f"got {xs.shape}")
        T, B = xs.shape[0], xs.shape[1]
        nh = self.n_h
        h = np.zeros((B, nh)) if h0 is None else np.asarray(h0, dtype=np.float64)
        c = np.zeros((B, nh)) if c0 is None else np.asarray(c0, dtype=np.float64)
        if h.shape != (B, nh) or c.shape != (B, nh):
            raise ShapeError(f"{self.prefix}: state shapes {h.shape}/{c.shape} "
                             f"!= ({B}, {nh})")
        W, U, b = self._fused()
        pre = (xs.reshape(T * B, self.n_in) @ W + b).reshape(T, B, 4 * nh)

        hs = np.empty((T, B, nh))
        cs = np.empty_like(hs)
        i_all = np.empty_like(hs)
        f_all = np.empty_like(hs)
        o_all = np.empty_like(hs)
        g_all = np.empty_like(hs)
        tc_all = np.empty_like(hs)
        h0_saved, c0_saved = h.copy(), c.copy()
        for t in range(T):
            a = pre[t] + h @ U
            gates = sigmoid(a[:, :3 * nh])
            i = gates[:, :nh]
            f = gates[:, nh:2 * nh]
            o = gates[:, 2 * nh:]
            g = np.tanh(a[:, 3 * nh:])
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            i_all[t], f_all[t], o_all[t], g_all[t] = i, f, o, g
            cs[t] = c
            tc_all[t] = tc
            hs[t] = h
        return hs, LstmTape(self, xs, h0_saved, c0_saved, hs, cs,
                            i_all, f_all, o_all, g_all, tc_all)

    def backward(self, tape: LstmTape, dhs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Reverse-mode gradients. Returns (dxs, dh0); accumulates into grads."""
        if tape.cell is not self:
            raise ShapeError("tape does not belong to this cell")
        if dhs.shape != tape.hs.shape:
            raise ShapeError(f"{self.prefix}: upstream gradient shape {dhs.shape} "
                             f"!= hidden states shape {tape.hs.shape}")
        T, B, nh = tape.hs.shape
        W, U, _ = self._fused()

        dA = np.empty((T, B, 4 * nh))
        sigd_i = tape.i * (1.0 - tape.i)
        sigd_f = tape.f * (1.0 - tape.f)
        sigd_o = tape.o * (1.0 - tape.o)
        tanhd_g = 1.0 - tape.g * tape.g
        tanhd_c = 1.0 - tape.tc * tape.tc
        UT = U.T.copy()
        dh = np.zeros((B, nh))
        dc = np.zeros((B, nh))
        for t in range(T - 1, -1, -1):
            dh = dh + dhs[t]
            c_prev = tape.cs[t - 1] if t > 0 else tape.c0
            do = dh * tape.tc[t]
            dc = dc + (dh * tape.o[t]) * tanhd_c[t]
            dA_t = dA[t]
            np.multiply(dc * tape.g[t], sigd_i[t], out=dA_t[:, :nh])
            np.multiply(dc * c_prev, sigd_f[t], out=dA_t[:, nh:2 * nh])
            np.multiply(do, sigd_o[t], out=dA_t[:, 2 * nh:3 * nh])
            np.multiply(dc * tape.i[t], tanhd_g[t], out=dA_t[:, 3 * nh:])
            dh = dA_t @ UT
            dc = dc * tape.f[t]

        flat_x = tape.xs.reshape(T * B, self.n_in)
        flat_A = dA.reshape(T * B, 4 * nh)
        h_prev_all = np.concatenate([tape.h0[None], tape.hs[:-1]], axis=0)
        flat_hp = h_prev_all.reshape(T * B, nh)

        dW = flat_x.T @ flat_A
        dU = flat_hp.T @ flat_A
        db = flat_A.sum(axis=0)
        p = self.p
        for k, gate in enumerate(("i", "f", "o", "g")):
            sl = slice(k * nh, (k + 1) * nh)
            p[f"W{gate}"].grad += dW[:, sl]
            p[f"U{gate}"].grad += dU[:, sl]
            p[f"b{gate}"].grad += db[sl]

        dxs = (flat_A @ W.T).reshape(T, B, self.n_in)
        return dxs, dh
