"""Straight-line scalar reference for a 2-unit, 1-input LSTM and GRU.

Writes crates/core/tests/fixtures/cell_oracle.json. Weights come from a
SplitMix64 stream drawn in parameter order; biases are fixed constants so the
bias paths are exercised too.
"""

import json
import math
import pathlib

MASK = (1 << 64) - 1
SEED = 20230406
XS = [0.5, -0.25, 1.0]


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def uniform(self, lo, hi):
        return lo + (hi - lo) * ((self.next_u64() >> 11) * 2.0**-53)


def xavier(rng, rows, cols):
    bound = math.sqrt(6.0 / (rows + cols))
    return [[rng.uniform(-bound, bound) for _ in range(cols)] for _ in range(rows)]


def sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def lstm_case():
    rng = SplitMix64(SEED)
    W = {}
    for name, r, c in [
        ("w_xi", 2, 1), ("w_hi", 2, 2), ("w_ci", 2, 2),
        ("w_xf", 2, 1), ("w_hf", 2, 2), ("w_cf", 2, 2),
        ("w_xc", 2, 1), ("w_hc", 2, 2),
        ("w_xo", 2, 1), ("w_ho", 2, 2), ("w_co", 2, 2),
        ("w_out", 1, 2),
    ]:
        W[name] = xavier(rng, r, c)
    B = {"b_i": [0.1, -0.2], "b_f": [0.3, 0.05], "b_c": [-0.1, 0.2], "b_o": [0.0, -0.3], "b_out": [0.25]}

    h0 = h1 = c0 = c1 = 0.0
    steps = []
    for x in XS:
        xi, xf, xc, xo = W["w_xi"], W["w_xf"], W["w_xc"], W["w_xo"]
        hi, hf, hc, ho = W["w_hi"], W["w_hf"], W["w_hc"], W["w_ho"]
        ci, cf, co = W["w_ci"], W["w_cf"], W["w_co"]
        i0 = sig(xi[0][0] * x + hi[0][0] * h0 + hi[0][1] * h1 + ci[0][0] * c0 + ci[0][1] * c1 + B["b_i"][0])
        i1 = sig(xi[1][0] * x + hi[1][0] * h0 + hi[1][1] * h1 + ci[1][0] * c0 + ci[1][1] * c1 + B["b_i"][1])
        f0 = sig(xf[0][0] * x + hf[0][0] * h0 + hf[0][1] * h1 + cf[0][0] * c0 + cf[0][1] * c1 + B["b_f"][0])
        f1 = sig(xf[1][0] * x + hf[1][0] * h0 + hf[1][1] * h1 + cf[1][0] * c0 + cf[1][1] * c1 + B["b_f"][1])
        g0 = math.tanh(xc[0][0] * x + hc[0][0] * h0 + hc[0][1] * h1 + B["b_c"][0])
        g1 = math.tanh(xc[1][0] * x + hc[1][0] * h0 + hc[1][1] * h1 + B["b_c"][1])
        n0 = f0 * c0 + i0 * g0
        n1 = f1 * c1 + i1 * g1
        o0 = sig(xo[0][0] * x + ho[0][0] * h0 + ho[0][1] * h1 + co[0][0] * n0 + co[0][1] * n1 + B["b_o"][0])
        o1 = sig(xo[1][0] * x + ho[1][0] * h0 + ho[1][1] * h1 + co[1][0] * n0 + co[1][1] * n1 + B["b_o"][1])
        h0, h1 = o0 * math.tanh(n0), o1 * math.tanh(n1)
        c0, c1 = n0, n1
        steps.append({"h": [h0, h1], "c": [c0, c1]})
    pred = W["w_out"][0][0] * h0 + W["w_out"][0][1] * h1 + B["b_out"][0]
    return {"weights": W, "biases": B, "steps": steps, "prediction": pred}


def gru_case():
    rng = SplitMix64(SEED + 1)
    W = {}
    for name, r, c in [
        ("w_z", 2, 1), ("u_z", 2, 2), ("w_r", 2, 1), ("u_r", 2, 2), ("w_h", 2, 1), ("u_h", 2, 2),
        ("w_out", 1, 2),
    ]:
        W[name] = xavier(rng, r, c)
    B = {"b_out": [-0.15]}

    h0 = h1 = 0.0
    steps = []
    for x in XS:
        wz, uz, wr, ur, wh, uh = W["w_z"], W["u_z"], W["w_r"], W["u_r"], W["w_h"], W["u_h"]
        z0 = sig(wz[0][0] * x + uz[0][0] * h0 + uz[0][1] * h1)
        z1 = sig(wz[1][0] * x + uz[1][0] * h0 + uz[1][1] * h1)
        r0 = sig(wr[0][0] * x + ur[0][0] * h0 + ur[0][1] * h1)
        r1 = sig(wr[1][0] * x + ur[1][0] * h0 + ur[1][1] * h1)
        g0 = math.tanh(wh[0][0] * x + uh[0][0] * (r0 * h0) + uh[0][1] * (r1 * h1))
        g1 = math.tanh(wh[1][0] * x + uh[1][0] * (r0 * h0) + uh[1][1] * (r1 * h1))
        h0, h1 = (1 - z0) * h0 + z0 * g0, (1 - z1) * h1 + z1 * g1
        steps.append({"h": [h0, h1]})
    pred = W["w_out"][0][0] * h0 + W["w_out"][0][1] * h1 + B["b_out"][0]
    return {"weights": W, "biases": B, "steps": steps, "prediction": pred}


def main():
    out = {
        "seed_lstm": SEED,
        "seed_gru": SEED + 1,
        "inputs": XS,
        "lstm": lstm_case(),
        "gru": gru_case(),
    }
    path = pathlib.Path(__file__).resolve().parent.parent / "crates/core/tests/fixtures/cell_oracle.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(out, indent=2) + "\n")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
