# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled closed-loop trial kernel; statement-for-statement twin of ``_pykernel``."""

from libc.math cimport atan2, cos, fmod, isfinite, sin, sqrt, M_PI

cdef double TWO_PI = 2.0 * M_PI


cdef inline double _wrap(double a) nogil:
    cdef double w = fmod(a, TWO_PI)
    if w <= -M_PI:
        w += TWO_PI
    elif w > M_PI:
        w -= TWO_PI
    return w


def closed_loop(double ts, double wh, double kappa_true, gains, weights,
                bint proposed, bint literal, bint small_angle,
                double descent_sign, double eps_u,
                const double[:, ::1] ref, const double[::1] dw, const double[::1] pf,
                const double[::1] pr, const double[:, ::1] dist,
                const double[:, ::1] nz_pick, const double[:, ::1] nz_fwd,
                const double[:, ::1] nz_refl, const double[:, ::1] nz_ref,
                double[:, ::1] out):
    cdef double ax = gains[0], ad = gains[1], aw = gains[2], af = gains[3], ar = gains[4], kap = gains[5]
    cdef double q00 = weights[0], q01 = weights[1], q10 = weights[2], q11 = weights[3]
    cdef double r00 = weights[4], r01 = weights[5], r10 = weights[6], r11 = weights[7]
    cdef Py_ssize_t n = dw.shape[0], k
    cdef double b = ts * wh
    cdef double decay = 1.0 - ts * wh
    cdef double xi = 0.0, xq = 0.0, ui = 0.0, uq = 0.0
    cdef double xhi = 0.0, xhq = 0.0, dhi = 0.0, dhq = 0.0
    cdef double pfh = 0.0, prh = 0.0, dwh = 0.0
    cdef double pf_prev = pf[0]
    cdef double c, s, yi, yq, fti, ftq, fi, fq, rfi, rfq, fnorm2, raw
    cdef double e, den, xsi, xsq, rri, rrq, corr
    cdef double a01, a10, bc, bs, b00, b01, b10, b11, xpi, xpq, yai, yaq, rsi, rsq
    cdef double rki, rkq, rni, rnq, ti, tq, det, uffi, uffq
    cdef double m00, m01, m10, m11, n00, n01, n10, n11, p00, p01, p10, p11, dn
    cdef double k00, k01, k10, k11, ei, eq, ufbi, ufbq, wt, nxi, nxq
    cdef int skip
    cdef Py_ssize_t abort = -1

    with nogil:
        for k in range(n):
            # measurements at sample k
            c = cos(pr[k])
            s = sin(pr[k])
            yi = c * xi - s * xq + nz_pick[k, 0]
            yq = s * xi + c * xq + nz_pick[k, 1]
            c = cos(pf_prev)
            s = sin(pf_prev)
            fti = c * ui - s * uq
            ftq = s * ui + c * uq
            fi = fti + nz_fwd[k, 0]
            fq = ftq + nz_fwd[k, 1]
            rfi = fti - kappa_true * xi + nz_refl[k, 0]
            rfq = ftq - kappa_true * xq + nz_refl[k, 1]

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
            rki = ref[k, 0] + nz_ref[k, 0]
            rkq = ref[k, 1] + nz_ref[k, 1]
            rni = ref[k + 1, 0] + nz_ref[k, 0]
            rnq = ref[k + 1, 1] + nz_ref[k, 1]
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

            out[k, 0] = xi
            out[k, 1] = xq
            out[k, 2] = yi
            out[k, 3] = yq
            out[k, 4] = fi
            out[k, 5] = fq
            out[k, 6] = rfi
            out[k, 7] = rfq
            out[k, 8] = xpi
            out[k, 9] = xpq
            out[k, 10] = xhi
            out[k, 11] = xhq
            out[k, 12] = dhi
            out[k, 13] = dhq
            out[k, 14] = pfh
            out[k, 15] = prh
            out[k, 16] = dwh
            out[k, 17] = uffi
            out[k, 18] = uffq
            out[k, 19] = ufbi
            out[k, 20] = ufbq
            out[k, 21] = ui
            out[k, 22] = uq
            out[k, 23] = sqrt(rsi * rsi + rsq * rsq)
            out[k, 24] = skip

            # true plant over [k, k+1)
            if small_angle:
                c = 1.0
                s = pf[k]
            else:
                c = cos(pf[k])
                s = sin(pf[k])
            wt = ts * dw[k]
            nxi = decay * xi - wt * xq + b * (c * ui - s * uq) + ts * dist[k, 0]
            nxq = wt * xi + decay * xq + b * (s * ui + c * uq) + ts * dist[k, 1]
            if not (isfinite(nxi) and isfinite(nxq) and isfinite(ui) and isfinite(uq)):
                abort = k
                break
            xi = nxi
            xq = nxq
            pf_prev = pf[k]
    return abort
