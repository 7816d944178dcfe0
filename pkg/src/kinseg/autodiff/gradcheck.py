"""Finite-difference gradient verification.

Central differences with h = 1e-5 at float64.  The reported error for a
tensor is ``max_i |ga_i - gn_i| / max(1, |ga_i|, |gn_i|)``: a relative
error with an absolute floor of 1, so tiny-magnitude entries are compared
absolutely.  Every operation must stay below 1e-4; a full model plus loss
must stay below 1e-3.
"""

from __future__ import annotations

import numpy as np

from .. import backend
from . import ops
from .tensor import Tensor

H = 1e-5
OP_TOL = 1e-4


def numerical_gradient(f, x: np.ndarray, h: float = H) -> np.ndarray:
    """Central-difference gradient of scalar-valued f at x (float64)."""
    x = x.astype(np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_error(ga: np.ndarray, gn: np.ndarray) -> float:
    denom = np.maximum(1.0, np.maximum(np.abs(ga), np.abs(gn)))
    return float(np.max(np.abs(ga - gn) / denom)) if ga.size else 0.0


def check(build_loss, inputs: dict[str, np.ndarray], tol: float = OP_TOL,
          h: float = H):
    """Check d(build_loss)/d(input) for every named input array.

    ``build_loss`` maps {name: ndarray} -> scalar Tensor.  Returns the dict
    of max errors; raises AssertionError beyond ``tol``.
    """
    inputs = {k: np.asarray(v, dtype=np.float64) for k, v in inputs.items()}
    tensors = {k: Tensor(v.copy(), requires_grad=True, dtype=np.float64)
               for k, v in inputs.items()}
    loss = build_loss(tensors)
    loss.backward()
    errors = {}
    for name, arr in inputs.items():
        def f(x, name=name):
            probe = {k: Tensor(v.copy(), dtype=np.float64)
                     for k, v in inputs.items()}
            probe[name] = Tensor(x, dtype=np.float64)
            return build_loss(probe).data
        gn = numerical_gradient(f, arr.copy(), h)
        ga = tensors[name].grad
        if ga is None:
            ga = np.zeros_like(arr)
        err = rel_error(ga, gn)
        errors[name] = err
        if err > tol:
            raise AssertionError(
                f"gradient check failed for {name!r}: error {err:.3e} > {tol:.1e}")
    return errors


# ---------------------------------------------------------------------------
# The per-operation suite (also run by the `kinseg gradcheck` CLI command)
# ---------------------------------------------------------------------------

def _weighted(t: Tensor, w: np.ndarray) -> Tensor:
    # Reduce through fixed random weights so every output element matters.
    return (t * Tensor(w, dtype=np.float64)).sum()


def run_op_suite(seed: int = 0, tol: float = OP_TOL, verbose: bool = False):
    """Gradient-check every differentiable op against central differences.

    Returns a list of (op_name, max_error) pairs; raises on failure.
    """
    rng = np.random.default_rng(seed)
    results = []

    def run(name, build, inputs):
        errs = check(build, inputs, tol=tol)
        worst = max(errs.values())
        results.append((name, worst))
        if verbose:
            print(f"  {name:<18s} max rel err {worst:.3e}")

    x = rng.normal(size=(4, 9))
    w_out = rng.normal(size=(4, 9))

    # keep relu/abs kinks and clamp boundaries away from the probe points
    x_safe = x + np.sign(x) * 0.05

    run("add", lambda t: _weighted(t["a"] + t["b"], w_out),
        {"a": x, "b": rng.normal(size=(4, 9))})
    run("mul", lambda t: _weighted(t["a"] * t["b"], w_out),
        {"a": x, "b": rng.normal(size=(4, 9))})
    run("relu", lambda t: _weighted(t["a"].relu(), w_out), {"a": x_safe})
    run("sigmoid", lambda t: _weighted(t["a"].sigmoid(), w_out), {"a": x})
    run("tanh", lambda t: _weighted(t["a"].tanh(), w_out), {"a": x})
    run("log", lambda t: _weighted(t["a"].log(), w_out),
        {"a": np.abs(x) + 0.5})
    run("abs", lambda t: _weighted(t["a"].abs(), w_out), {"a": x_safe})
    run("square", lambda t: _weighted(t["a"].square(), w_out), {"a": x})
    run("clamp_max", lambda t: _weighted(t["a"].clamp_max(0.5), w_out),
        {"a": x_safe})
    run("clamp_min", lambda t: _weighted(t["a"].clamp_min(-0.5), w_out),
        {"a": x_safe})
    run("softmax", lambda t: _weighted(t["a"].softmax(axis=0), w_out), {"a": x})
    run("sum", lambda t: t["a"].sum(), {"a": x})
    run("mean", lambda t: t["a"].mean(), {"a": x})
    run("transpose", lambda t: _weighted(t["a"].transpose(), w_out.T), {"a": x})
    run("flip", lambda t: _weighted(t["a"].flip(1), w_out), {"a": x})
    run("subsample", lambda t: _weighted(t["a"].subsample(1, 3), w_out[:, :3]),
        {"a": x})
    w_up = rng.normal(size=(4, 18))
    run("repeat_upsample",
        lambda t: _weighted(t["a"].repeat_upsample(1, 2), w_up), {"a": x})
    run("narrow", lambda t: _weighted(t["a"].narrow(1, 2, 5), w_out[:, :5]),
        {"a": x})
    rows = rng.integers(0, 4, size=9)
    run("take_per_column",
        lambda t: _weighted(t["a"].take_per_column(rows), w_out[0]), {"a": x})
    w_cat = rng.normal(size=(8, 9))
    run("concat",
        lambda t: _weighted(ops.concat([t["a"], t["b"]], axis=0), w_cat),
        {"a": x, "b": rng.normal(size=(4, 9))})

    def drop_build(t):
        out = ops.dropout(t["a"], 0.4, True, np.random.default_rng(seed + 1))
        return _weighted(out, w_out)

    run("dropout", drop_build, {"a": x})

    w_conv_red = rng.normal(size=(3, 9))
    for dil in (1, 2, 4):
        cw = rng.normal(size=(3, 4, 3)) / 3.0
        run(f"conv1d_d{dil}",
            lambda t, d=dil: _weighted(
                ops.conv1d(t["x"], t["w"], t["b"], d), w_conv_red),
            {"x": x, "w": cw, "b": rng.normal(size=3)})
    run("conv1d_k1",
        lambda t: _weighted(ops.conv1d(t["x"], t["w"], t["b"], 1), w_conv_red),
        {"x": x, "w": rng.normal(size=(3, 4, 1)), "b": rng.normal(size=3)})

    q, m, t_len = 3, 2, 6
    seq = rng.normal(size=(t_len, m))
    w_h = rng.normal(size=(t_len, 2 * q))  # weights for h output reduction
    run("lstm",
        lambda t: _weighted(ops.lstm(t["x"], t["wx"], t["wh"], t["b"]),
                            w_h[:, :q]),
        {"x": seq, "wx": rng.normal(size=(4 * q, m)) * 0.5,
         "wh": rng.normal(size=(4 * q, q)) * 0.5, "b": rng.normal(size=4 * q) * 0.5})
    run("gru",
        lambda t: _weighted(ops.gru(t["x"], t["wx"], t["wh"], t["bx"], t["bh"]),
                            w_h[:, :q]),
        {"x": seq, "wx": rng.normal(size=(3 * q, m)) * 0.5,
         "wh": rng.normal(size=(3 * q, q)) * 0.5,
         "bx": rng.normal(size=3 * q) * 0.5, "bh": rng.normal(size=q) * 0.5})

    return results


def run_full_suite(verbose: bool = False) -> bool:
    """Run the op suite on every available backend; True when all pass."""
    ok = True
    previous = backend.active_name()
    try:
        for name in backend.available():
            backend.use(name)
            if verbose:
                print(f"backend: {name}")
            try:
                run_op_suite(verbose=verbose)
            except AssertionError as exc:
                ok = False
                print(f"FAIL [{name}]: {exc}")
    finally:
        backend.use(previous)
    return ok
