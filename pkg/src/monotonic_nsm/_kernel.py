"""Compiled inner loop of the clock-driven engine."""

import math

import numba as nb
import numpy as np

MODEL_ADEX = 0
MODEL_LIF = 1

OK = 0
OVERFLOW = 1
BUFFER_FULL = 2


@nb.njit(cache=True)
def run_chunk(
    s0, n_steps, dt,
    model, C, g_L, E_L, V_T, Delta_T, V_cut, V_r, a, b, tau_w, ref_steps,
    tau_m, R,
    V, w, ref_left, syn, pending, decay,
    out_ptr, out_dst, out_kind, out_w,
    ev_step, ev_neuron, ev_kind, ev_w, ev_pos,
    cur_targets, cur_vals,
    record, rec_step, rec_neuron,
):
    """Advance the network ``n_steps`` from global step ``s0``.

    Mutates the state arrays in place. Returns
    ``(status, steps_done, n_recorded, ev_pos, bad_neuron)``.
    """
    n = V.shape[0]
    n_rec = 0
    cap = rec_step.shape[0]
    current = np.zeros(n)
    spiked = np.zeros(n, dtype=np.bool_)
    n_ev = ev_step.shape[0]
    for i in range(n_steps):
        s = s0 + i
        # worst case every neuron fires this step
        if n_rec + n > cap:
            return BUFFER_FULL, i, n_rec, ev_pos, -1
        while ev_pos < n_ev and ev_step[ev_pos] == s:
            pending[ev_kind[ev_pos], ev_neuron[ev_pos]] += ev_w[ev_pos]
            ev_pos += 1
        for j in range(n):
            syn[0, j] = syn[0, j] * decay[0] + pending[0, j]
            syn[1, j] = syn[1, j] * decay[1] + pending[1, j]
            syn[2, j] = syn[2, j] * decay[2] + pending[2, j]
            syn[3, j] = syn[3, j] * decay[3] + pending[3, j]
            pending[0, j] = 0.0
            pending[1, j] = 0.0
            pending[2, j] = 0.0
            pending[3, j] = 0.0
            current[j] = syn[0, j] + syn[1, j] - syn[2, j] - syn[3, j]
        for t in range(cur_targets.shape[0]):
            current[cur_targets[t]] += cur_vals[i, t]

        for j in range(n):
            spiked[j] = False
            if ref_left[j] > 0:
                ref_left[j] -= 1
                V[j] = V_r[j]
                if model[j] == MODEL_ADEX:
                    w[j] = w[j] + dt * (a[j] * (V_r[j] - E_L[j]) - w[j]) / tau_w[j]
                    if not math.isfinite(w[j]):
                        return OVERFLOW, i, n_rec, ev_pos, j
                continue
            v = V[j]
            if model[j] == MODEL_ADEX:
                if Delta_T[j] > 0:
                    arg = (v - V_T[j]) / Delta_T[j]
                    if arg > 50.0:
                        arg = 50.0
                    spk = g_L[j] * Delta_T[j] * math.exp(arg)
                else:
                    spk = 0.0
                dv = (-g_L[j] * (v - E_L[j]) + spk - w[j] + current[j]) / C[j]
                dw = (a[j] * (v - E_L[j]) - w[j]) / tau_w[j]
                v = v + dt * dv
                w[j] = w[j] + dt * dw
            else:
                v = v + dt * (-(v - E_L[j]) + R[j] * current[j]) / tau_m[j]
            if not (math.isfinite(v) and math.isfinite(w[j])):
                return OVERFLOW, i, n_rec, ev_pos, j
            if v >= V_cut[j]:
                v = V_r[j]
                w[j] += b[j]
                ref_left[j] = ref_steps[j]
                spiked[j] = True
            V[j] = v

        for j in range(n):
            if spiked[j]:
                for e in range(out_ptr[j], out_ptr[j + 1]):
                    pending[out_kind[e], out_dst[e]] += out_w[e]
                if record[j]:
                    rec_step[n_rec] = s
                    rec_neuron[n_rec] = j
                    n_rec += 1
    return OK, n_steps, n_rec, ev_pos, -1
