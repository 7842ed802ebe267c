"""Independent reference values frozen into the unit tests.

Run with: python3 scripts/reference_values.py
"""
import mpmath as mp
import sympy as sp

mp.mp.dps = 50


def element_stiffness(nu):
    # Exact integration of B^T D B over the reference square [-1, 1]^2 mapped
    # to a unit square (dx/dxi = 1/2).
    xi, eta = sp.symbols("xi eta")
    corners = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    shape = [sp.Rational(1, 4) * (1 + xi * cx) * (1 + eta * cy) for cx, cy in corners]
    B = sp.zeros(3, 8)
    for a, N in enumerate(shape):
        dx = sp.diff(N, xi) * 2
        dy = sp.diff(N, eta) * 2
        B[0, 2 * a] = dx
        B[1, 2 * a + 1] = dy
        B[2, 2 * a] = dy
        B[2, 2 * a + 1] = dx
    nu = sp.nsimplify(nu)
    D = sp.Matrix([[1, nu, 0], [nu, 1, 0], [0, 0, (1 - nu) / 2]]) / (1 - nu**2)
    integrand = B.T * D * B * sp.Rational(1, 4)
    return integrand.applyfunc(lambda f: sp.integrate(f, (xi, -1, 1), (eta, -1, 1)))


KE = element_stiffness(0.3)
print("KE(nu=0.3):")
for r in range(8):
    print("{" + ", ".join(f"{float(KE[r, c]):.17g}" for c in range(8)) + "},")

eps = mp.mpf("1e-4")
S = (0 + 1 - mp.sqrt((0 - 1) ** 2 + eps) + mp.sqrt(eps)) / 2
print("smooth_min(0, 1, 1e-4) =", mp.nstr(S, 20))

P = mp.mpf(40)
Q = P + mp.log(3) / mp.log(mp.mpf("0.5"))
E = (mp.mpf("0.9") ** P + mp.mpf("0.2") ** P + mp.mpf("0.1") ** P) ** (1 / Q)
print("smooth_max(0.9, 0.2, 0.1; P=40) =", mp.nstr(E, 20))
