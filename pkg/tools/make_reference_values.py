"""High-precision reference values for the test suite.

Everything here is computed from first principles with mpmath at 50
significant digits, independently of the package implementation: the
test files freeze these numbers as literals.  Re-run with

    python tools/make_reference_values.py

and paste the output if a reference ever needs to be regenerated.
"""

import mpmath as mp

mp.mp.dps = 50


def psi_sigvar(z, mu, tau):
    """Hinged sigmoidal kernel, direct from its definition."""
    val = 2 * (1 + mu) / (mu + mp.e**(-tau * z)) - 1
    return val if val > 0 else mp.mpf(0)


def bar_mu():
    """Unique positive root of mu - log(2 + mu) = 1."""
    return mp.findroot(lambda m: m - mp.log(2 + m) - 1, mp.mpf("2.5"))


def analytic_evar(alpha):
    """EVaR of U(0,1): inf_{s>0} (log((e^s - 1)/s) - log(alpha)) / s."""
    alpha = mp.mpf(alpha)

    def g(s):
        return (mp.log((mp.e**s - 1) / s) - mp.log(alpha)) / s

    # golden section on log-s, very wide bracket, then polish
    lo, hi = mp.mpf(-30), mp.mpf(30)
    invphi = (mp.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = g(mp.e**c), g(mp.e**d)
    for _ in range(400):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = g(mp.e**c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = g(mp.e**d)
    return min(fc, fd)


def analytic_sigvar(alpha, mu, tau):
    """SigVaR of U(0,1) by direct quadrature of the hinged kernel.

    Solves mean(psi(Z - t)) = alpha for the smallest t, Z ~ U(0,1).
    The integrand is zero below t - delta, smooth above it.
    """
    alpha, mu, tau = mp.mpf(alpha), mp.mpf(mu), mp.mpf(tau)
    delta = mp.log(2 + mu) / tau

    def expectation(t):
        lo = max(mp.mpf(0), t - delta)
        if lo >= 1:
            return mp.mpf(0)
        return mp.quad(lambda z: 2 * (1 + mu) / (mu + mp.e**(-tau * (z - t))) - 1,
                       [lo, min(mp.mpf(1), t + 5 / tau), mp.mpf(1)])

    lo, hi = mp.mpf(-1) - delta, mp.mpf(2) + delta
    for _ in range(220):
        mid = (lo + hi) / 2
        if expectation(mid) <= alpha:
            hi = mid
        else:
            lo = mid
    return hi


def main():
    mb = bar_mu()
    print("BAR_MU = %s" % mp.nstr(mb, 22))
    print()

    for a in ("0.05", "0.1", "0.5", "0.9"):
        print("EVAR_U01[%s] = %s" % (a, mp.nstr(analytic_evar(a), 17)))
    print()

    #

    cases = [("0.5", "10", "550"), ("1.0", "10", "550"),
             ("0.1", "2.6", "8.0"), ("0.5", "320.6", "643.0"),
             ("0.05", "40", "120")]
    for a, m, t in cases:
        v = analytic_sigvar(a, m, t)
        print("SIGVAR_U01[alpha=%s, mu=%s, tau=%s] = %s" % (a, m, t, mp.nstr(v, 15)))
    print()

    # kernel spot values (z, mu, tau); derivative of the smooth branch by mp.diff
    spots = [("0.3", "5", "2"), ("-0.2", "10", "550"), ("0.0", "2.6", "7.0"),
             ("-1.5", "3.5", "1.25")]
    for z, m, t in spots:
        z_, m_, t_ = mp.mpf(z), mp.mpf(m), mp.mpf(t)
        val = psi_sigvar(z_, m_, t_)
        smooth = lambda u: 2 * (1 + m_) / (m_ + mp.e**(-t_ * u)) - 1
        der = mp.diff(smooth, z_)
        print("PSI_SS[z=%s, mu=%s, tau=%s] = %s ; d/dz(smooth) = %s"
              % (z, m, t, mp.nstr(val, 17), mp.nstr(der, 17)))
    print()

    # smooth sigmoidal (SS) kernel spot values (z, rho, m1, m2)
    ss_spots = [("0.4", "1.0", "1.0", "0.5"), ("-2.0", "6.25", "1.0", "0.5")]
    for z, r, m1, m2 in ss_spots:
        z_, r_, m1_, m2_ = (mp.mpf(v) for v in (z, r, m1, m2))
        val = (1 + r_ * m1_) / (1 + r_ * m2_ * mp.e**(-z_ / r_))
        print("PSI_SM[z=%s, rho=%s, m1=%s, m2=%s] = %s" % (z, r, m1, m2, mp.nstr(val, 17)))
    print()

    # approximation gap bound log(2 + mu)/tau + 2/mu at (mu, tau) = (10, 550)
    m_, t_ = mp.mpf(10), mp.mpf(550)
    print("ERROR_BOUND[mu=10, tau=550, L=1] = %s" % mp.nstr(mp.log(2 + m_) / t_ + 2 / m_, 17))


if __name__ == "__main__":
    main()
