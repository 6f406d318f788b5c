"""Gauss-Kronrod 10/21 rule shared by the quadrature engine and kernel cores."""

import numpy as np

# QUADPACK qk21 abscissae and weights (non-negative half, centre last)
_XGK = np.array([
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
])
_WGK = np.array([
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077208624000960,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
])
_WG = np.array([
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
])

#: full 21-point node set on [-1, 1]
NODES = np.concatenate([-_XGK[:10], [0.0], _XGK[9::-1]])
#: Kronrod weights matching NODES
WK = np.concatenate([_WGK[:10], [_WGK[10]], _WGK[9::-1]])
#: Gauss weights matching NODES (zero on Kronrod-only nodes)
WG = np.zeros(21)
_wg_half = np.zeros(11)
_wg_half[1:10:2] = _WG
WG[:10] = _wg_half[:10]
WG[11:] = _wg_half[9::-1]

EPS = np.finfo(float).eps
TINY = np.finfo(float).tiny


def apply_rule(fx, half):
    """Apply the 21-point pair to sampled values.

    Parameters
    ----------
    fx : ndarray, shape (n, 21)
        Integrand values at ``centre + half * NODES`` for ``n`` panels.
    half : ndarray, shape (n,)
        Half-widths of the panels.

    Returns
    -------
    result : ndarray
        Kronrod estimates per panel.
    error : ndarray
        QUADPACK-style error estimates per panel.
    """
    ah = np.abs(half)
    resk = (fx @ WK) * half
    resg = (fx @ WG) * half
    mean = (fx @ WK) * 0.5
    resasc = (np.abs(fx - mean[:, None]) @ WK) * ah
    resabs = (np.abs(fx) @ WK) * ah
    err = np.abs(resk - resg)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
    err = np.where((resasc != 0) & (err != 0), scaled, err)
    floor = 50.0 * EPS * resabs
    err = np.where(resabs > TINY / (50.0 * EPS), np.maximum(floor, err), err)
    return resk, err
