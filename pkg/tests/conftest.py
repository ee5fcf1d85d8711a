import numpy as np
import pytest


def brute_conv3d(x, g, pad=(0, 0, 0), stride=(1, 1, 1), groups=1):
    """Literal nested-loop cross-correlation; tiny shapes only."""
    nb, c, t, h, w = x.shape
    n, cg, kt, kh, kw = g.shape
    pt, ph, pw = pad
    st, sh, sw = stride
    xp = np.zeros((nb, c, t + 2 * pt, h + 2 * ph, w + 2 * pw), dtype=np.float64)
    xp[:, :, pt:pt + t, ph:ph + h, pw:pw + w] = x
    to = (t + 2 * pt - kt) // st + 1
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    ng = n // groups
    out = np.zeros((nb, n, to, ho, wo))
    for b in range(nb):
        for o in range(n):
            grp = o // ng
            for i in range(to):
                for j in range(ho):
                    for q in range(wo):
                        acc = 0.0
                        for cc in range(cg):
                            ci = grp * cg + cc
                            for a in range(kt):
                                for r in range(kh):
                                    for s in range(kw):
                                        acc += xp[b, ci, i * st + a, j * sh + r, q * sw + s] * g[o, cc, a, r, s]
                        out[b, o, i, j, q] = acc
    return out


@pytest.fixture
def brute():
    return brute_conv3d
