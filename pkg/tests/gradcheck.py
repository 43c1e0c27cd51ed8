"""Central-finite-difference gradient checking shared by the test modules."""
import numpy as np

from robustrec.diffcore import Tensor

H = 1e-5
REL = 1e-4
FLOOR = 1e-7


def numeric_grads(f, arrays, h=H):
    """Central differences of f(list of arrays) -> float, entry by entry."""
    grads = []
    for x in arrays:
        g = np.zeros_like(x)
        flat, gf = x.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(arrays)
            flat[i] = orig - h
            fm = f(arrays)
            flat[i] = orig
            gf[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric, floor=FLOOR):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max()) if a.size else 0.0)
    return worst


def gradcheck(make_scalar, arrays, rel=REL, h=H, floor=FLOOR):
    """Assert analytic gradients of make_scalar(*leaf tensors) match central
    finite differences. Returns the worst relative error observed. floor sets
    the denominator floor: entries whose gradient magnitude sits below it are
    held to the absolute tolerance floor*rel instead, which keeps finite
    difference cancellation noise on large summed losses from dominating."""
    leaves = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    out = make_scalar(*leaves)
    out.backward()
    analytic = [leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data)
                for leaf in leaves]

    def f(xs):
        consts = [Tensor(x) for x in xs]
        return float(make_scalar(*consts).data)

    numeric = numeric_grads(f, [np.array(a, dtype=np.float64) for a in arrays], h=h)
    err = max_rel_error(analytic, numeric, floor=floor)
    assert err <= rel, f"gradient mismatch: worst relative error {err:.3e} > {rel:g}"
    return err
