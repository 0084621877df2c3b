"""Adjoints of the jump operators T, I and J.

For zeta(x) = x/2 the adjoint data are known in closed form
(zeta* = -x/3, c = -1/3, c_bar = 0); for random contractions the pairing
int phi (A psi) = int (A* phi) psi is checked by adaptive quadrature.
"""

from jumpfilter.operators import analytic_half_shift, duality_suite


def main(n_triples=10, seed=0):
    for k, v in analytic_half_shift().items():
        print(f"x/2 shift: max deviation of {k:9s} {v:.2e}")
    for rec in duality_suite(n_triples, seed):
        print(f"{rec.label:8s} d={rec.dim} {rec.which}: relative error {rec.rel_error:.2e}")


if __name__ == "__main__":
    main()
