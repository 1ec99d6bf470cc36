"""Closed-loop trial kernel with compiled and pure-Python backends.

The compiled extension is used when it was built; otherwise the pure-Python
loop is selected at import.  Both produce the same rows to rounding.
"""

from __future__ import annotations

import numpy as np

from . import _pykernel
from .phasor import EPS_DET, SingularMatrixError

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

COLUMNS = (
    "x_i", "x_q", "y_i", "y_q", "fwd_i", "fwd_q", "refl_i", "refl_q",
    "xpred_i", "xpred_q", "xhat_i", "xhat_q", "dhat_i", "dhat_q",
    "phi_fwd_hat", "phi_rec_hat", "dw_hat",
    "uff_i", "uff_q", "ufb_i", "ufb_q", "u_i", "u_q",
    "innov_norm", "skip",
)
COL = {name: i for i, name in enumerate(COLUMNS)}

BACKENDS = {"python": _pykernel.closed_loop}
if _ckernel is not None:
    BACKENDS["cython"] = _ckernel.closed_loop

DEFAULT_BACKEND = "cython" if "cython" in BACKENDS else "python"


def available_backends() -> list[str]:
    return list(BACKENDS)


def get_backend(name: str | None = None):
    name = name or DEFAULT_BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}; "
                         f"available: {', '.join(BACKENDS)}") from None


def _c(a, ndim):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {a.shape}")
    return a


def run_closed_loop(*, ts, omega_half, kappa_true, gains, weights, proposed, literal,
                    small_angle, descent_sign, eps_u, ref, delta_omega, phi_fwd, phi_rec,
                    disturbance, noise_pickup, noise_forward, noise_reflected, noise_reference,
                    backend=None):
    """Validate inputs, allocate the output table and run one trial.

    Returns ``(table, abort_step)``; rows after an abort are NaN.
    """
    dw = _c(delta_omega, 1)
    n = dw.shape[0]
    ref = _c(ref, 2)
    if ref.shape != (n + 1, 2):
        raise ValueError(f"reference must have shape ({n + 1}, 2), got {ref.shape}")
    arrays = [_c(phi_fwd, 1), _c(phi_rec, 1)]
    if any(a.shape != (n,) for a in arrays):
        raise ValueError("truth trajectories must share one length")
    pairs = [_c(a, 2) for a in (disturbance, noise_pickup, noise_forward, noise_reflected, noise_reference)]
    if any(a.shape != (n, 2) for a in pairs):
        raise ValueError(f"paired trajectories must have shape ({n}, 2)")
    b = ts * omega_half
    if not b * b > EPS_DET:
        raise SingularMatrixError(b * b)
    out = np.full((n, len(COLUMNS)), np.nan)
    abort = get_backend(backend)(
        float(ts), float(omega_half), float(kappa_true),
        [float(g) for g in gains], [float(w) for w in weights],
        bool(proposed), bool(literal), bool(small_angle), float(descent_sign), float(eps_u),
        ref, dw, arrays[0], arrays[1], *pairs, out,
    )
    return out, int(abort)
