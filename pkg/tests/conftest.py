"""Shared helpers for the test suite."""

from cutdg.geometry import BackgroundMesh, Geometry, build_mesh, halfplane_from_line


def ramp_mesh(nx=8, ny=8, slope=0.75, offset=None, box=(0.0, 0.0, 1.0, 1.0)):
    """Unit-box mesh cut by a single line, kept side above."""
    if offset is None:
        offset = 1.3 / nx
    bg = BackgroundMesh(*box, nx, ny)
    geo = Geometry((halfplane_from_line(slope, offset),))
    return build_mesh(bg, geo)


def uncut_mesh(nx=2, ny=2, box=(0.0, 0.0, 1.0, 1.0)):
    return build_mesh(BackgroundMesh(*box, nx, ny), Geometry())


def polygon_monomial_integral(poly, p, q):
    """Exact integral of x^p y^q over a polygon via edge integrals (sympy).

    Independent of the fan-triangulation quadrature: Green's theorem reduces
    the area integral to a sum of univariate polynomial edge integrals.
    """
    import sympy as sp

    t = sp.Symbol("t")
    total = sp.Integer(0)
    n = len(poly)
    for k in range(n):
        x0, y0 = (sp.Float(v, 30) for v in poly[k])
        x1, y1 = (sp.Float(v, 30) for v in poly[(k + 1) % n])
        X = x0 + (x1 - x0) * t
        Y = y0 + (y1 - y0) * t
        total += sp.integrate(X ** (p + 1) / (p + 1) * Y**q * (y1 - y0), (t, 0, 1))
    return float(total)
