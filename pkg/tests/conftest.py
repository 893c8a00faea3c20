import random
from fractions import Fraction

import pytest

from hierwalk.exact import QC
from hierwalk.forms import FormAlgebra


def random_qc(rng, span=3):
    return QC(Fraction(rng.randint(-span, span), rng.randint(1, 3)),
              Fraction(rng.randint(-span, span), rng.randint(1, 3)))


def random_form(alg: FormAlgebra, rng: random.Random, nterms=6, max_factors=4,
                unit_modulus=False):
    """Random polynomial form with exact coefficients.

    ``unit_modulus`` draws all coefficients as one global unit from {1, i}
    times signed rationals, so every coefficient modulus stays rational
    under sums and products (exact norm comparisons need that).
    """
    F = alg.zero()
    gens = []
    for i in range(alg.n_sites):
        gens += [alg.phi(i, QC(1)), alg.phibar(i, QC(1)),
                 alg.psi(i, QC(1)), alg.psibar(i, QC(1))]
    unit = rng.choice([QC(1), QC(0, 1)]) if unit_modulus else None
    for _ in range(nterms):
        if unit_modulus:
            c = QC(Fraction(rng.randint(-5, 5), rng.randint(1, 4))) * unit
            if not c:
                c = unit
        else:
            c = random_qc(rng)
        term = alg.const(c)
        for _ in range(rng.randint(0, max_factors)):
            term = term * gens[rng.randrange(len(gens))]
        F = F + term
    return F


def random_even_form(alg, rng, nterms=5):
    F = random_form(alg, rng, nterms)
    return Form_even_part(F)


def Form_even_part(F):
    from hierwalk.forms import Form
    return Form(F.alg, {m: p for m, p in F.terms.items() if m.bit_count() % 2 == 0})


@pytest.fixture
def rng():
    return random.Random(20240817)
