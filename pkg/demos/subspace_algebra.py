"""Orthogonal complements in a small k-symplectic vector space.

Two 2-forms on R^3 share the third direction; the vertical subspace is the
plane orthogonal to it.  The line along the third axis turns out to be its
own complement.
"""

import numpy as np

from nhfield.ksla import KSymplecticSpace, Subspace, classify, orthogonal, structure_validity

forms = np.zeros((2, 3, 3))
forms[0, 0, 2], forms[0, 2, 0] = 1.0, -1.0  # e1 ^ e3
forms[1, 1, 2], forms[1, 2, 1] = 1.0, -1.0  # e2 ^ e3
space = KSymplecticSpace(forms, Subspace.span(np.eye(3)[:, :2]))
print("structure:", structure_validity(space))

for label, vectors in [("e3", [[0, 0, 1]]), ("e1", [[1, 0, 0]]), ("e1,e3", [[1, 0, 0], [0, 0, 1]])]:
    W = Subspace.span(np.array(vectors, dtype=float).T)
    Wp = orthogonal(space, W)
    flags = classify(space, W)
    kinds = [k for k in ("isotropic", "coisotropic", "lagrangian", "ksymplectic") if flags[k]]
    print(f"W = span{{{label}}}: dim W_perp = {Wp.d}, {', '.join(kinds) or 'none'}")
