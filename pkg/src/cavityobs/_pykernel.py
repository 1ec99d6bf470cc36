"""Pure-Python closed-loop trial kernel.

Scalar transcription of plant -> measurements -> observer -> controller for
one realization.  ``_ckernel.pyx`` repeats this loop statement for statement;
keep the two in step (the test suite compares them).
"""

from math import atan2, cos, fmod, isfinite, pi, sin, sqrt

TWO_PI = 2.0 * pi


def _wrap(a):
    w = fmod(a, TWO_PI)
    if w <= -pi:
        w += TWO_PI
    elif w > pi:
        w -= TWO_PI
    return w


def closed_loop(ts, wh, kappa_true, gains, weights, proposed, literal, small_angle,
                descent_sign, eps_u, ref, dw, pf, pr, dist,
                nz_pick, nz_fwd, nz_refl, nz_ref, out):
    """Simulate ``len(dw)`` steps, writing one row of ``out`` per step.

    Returns the step index at which the state stopped being finite, or -1.
    See :data:`cavityobs.kernel.COLUMNS` for the row layout.
    """
    ax, ad, aw, af, ar, kap = [float(g) for g in gains]
    q00, q01, q10, q11, r00, r01, r10, r11 = [float(w) for w in weights]
    n = len(dw)
    rows = []
    ref, dw, pf, pr, dist = ref.tolist(), dw.tolist(), pf.tolist(), pr.tolist(), dist.tolist()
    nz_pick, nz_fwd = nz_pick.tolist(), nz_fwd.tolist()
    nz_refl, nz_ref = nz_refl.tolist(), nz_ref.tolist()
    b = ts * wh
    decay = 1.0 - ts * wh

    xi = xq = 0.0
    ui = uq = 0.0
    xhi = xhq = 0.0
    dhi = dhq = 0.0
    pfh = prh = dwh = 0.0
    pf_prev = pf[0]

    for k in range(n):
        # measurements at sample k
        c = cos(pr[k])
        s = sin(pr[k])
        yi = c * xi - s * xq + nz_pick[k][0]
        yq = s * xi + c * xq + nz_pick[k][1]
        c = cos(pf_prev)
        s = sin(pf_prev)
        fti = c * ui - s * uq
        ftq = s * ui + c * uq
        fi = fti + nz_fwd[k][0]
        fq = ftq + nz_fwd[k][1]
        rfi = fti - kappa_true * xi + nz_refl[k][0]
        rfq = ftq - kappa_true * xq + nz_refl[k][1]

        skip = 0
        fnorm2 = fi * fi + fq * fq
        if proposed:
            if sqrt(fnorm2) > eps_u and sqrt(ui * ui + uq * uq) > eps_u:
                raw = _wrap(atan2(fq, fi) - atan2(uq, ui))
                if literal:
                    pfh = pfh + af * raw
                else:
                    pfh = pfh + af * _wrap(raw - pfh)
            else:
                skip |= 1
            if kap != 0.0 and sqrt(fnorm2) > eps_u:
                e = dwh / wh
                den = 1.0 + e * e
                xsi = (fi - e * fq) / den
                xsq = (fq + e * fi) / den
                rri = rfi - (fi - kap * xsi)
                rrq = rfq - (fq - kap * xsq)
                corr = rri * (-fq) + rrq * fi
                dwh = dwh + descent_sign * aw * (b * wh / (kap * fnorm2)) * corr
            else:
                skip |= 2

        # model matrices for [k-1, k), refreshed by the drift observers
        a01 = -ts * dwh
        a10 = ts * dwh
        if small_angle:
            bc = 1.0
            bs = pfh
        else:
            bc = cos(pfh)
            bs = sin(pfh)
        b00 = b * bc
        b01 = -b * bs
        b10 = b * bs
        b11 = b * bc
        xpi = decay * xhi + a01 * xhq + b00 * ui + b01 * uq + dhi
        xpq = a10 * xhi + decay * xhq + b10 * ui + b11 * uq + dhq

        if proposed:
            if sqrt(yi * yi + yq * yq) > eps_u and sqrt(xpi * xpi + xpq * xpq) > eps_u:
                raw = _wrap(atan2(yq, yi) - atan2(xpq, xpi))
                if literal:
                    prh = prh + ar * raw
                else:
                    prh = prh + ar * _wrap(raw - prh)
            else:
                skip |= 4
            c = cos(prh)
            s = sin(prh)
            yai = c * yi + s * yq
            yaq = -s * yi + c * yq
        else:
            yai = yi
            yaq = yq

        rsi = yai - xpi
        rsq = yaq - xpq
        xhi = xpi + ax * rsi
        xhq = xpq + ax * rsq
        dhi = dhi + ad * rsi
        dhq = dhq + ad * rsq

        # feedforward inversion
        rki = ref[k][0] + nz_ref[k][0]
        rkq = ref[k][1] + nz_ref[k][1]
        rni = ref[k + 1][0] + nz_ref[k][0]
        rnq = ref[k + 1][1] + nz_ref[k][1]
        ti = rni - (decay * xhi + a01 * xhq) - dhi
        tq = rnq - (a10 * xhi + decay * xhq) - dhq
        det = b00 * b11 - b01 * b10
        uffi = (b11 * ti - b01 * tq) / det
        uffq = (-b10 * ti + b00 * tq) / det

        # one-step LQR gain K = (B'QB + R)^-1 B'QA
        m00 = b00 * q00 + b10 * q10
        m01 = b00 * q01 + b10 * q11
        m10 = b01 * q00 + b11 * q10
        m11 = b01 * q01 + b11 * q11
        n00 = m00 * b00 + m01 * b10 + r00
        n01 = m00 * b01 + m01 * b11 + r01
        n10 = m10 * b00 + m11 * b10 + r10
        n11 = m10 * b01 + m11 * b11 + r11
        p00 = m00 * decay + m01 * a10
        p01 = m00 * a01 + m01 * decay
        p10 = m10 * decay + m11 * a10
        p11 = m10 * a01 + m11 * decay
        dn = n00 * n11 - n01 * n10
        k00 = (n11 * p00 - n01 * p10) / dn
        k01 = (n11 * p01 - n01 * p11) / dn
        k10 = (-n10 * p00 + n00 * p10) / dn
        k11 = (-n10 * p01 + n00 * p11) / dn
        ei = rki - xhi
        eq = rkq - xhq
        ufbi = k00 * ei + k01 * eq
        ufbq = k10 * ei + k11 * eq
        ui = uffi + ufbi
        uq = uffq + ufbq

        rows.append((xi, xq, yi, yq, fi, fq, rfi, rfq, xpi, xpq, xhi, xhq, dhi, dhq,
                     pfh, prh, dwh, uffi, uffq, ufbi, ufbq, ui, uq,
                     sqrt(rsi * rsi + rsq * rsq), float(skip)))

        # true plant over [k, k+1)
        if small_angle:
            c = 1.0
            s = pf[k]
        else:
            c = cos(pf[k])
            s = sin(pf[k])
        wt = ts * dw[k]
        nxi = decay * xi - wt * xq + b * (c * ui - s * uq) + ts * dist[k][0]
        nxq = wt * xi + decay * xq + b * (s * ui + c * uq) + ts * dist[k][1]
        if not (isfinite(nxi) and isfinite(nxq) and isfinite(ui) and isfinite(uq)):
            out[:len(rows)] = rows
            return k
        xi = nxi
        xq = nxq
        pf_prev = pf[k]
    out[:] = rows
    return -1
