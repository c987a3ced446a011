"""Closed-form initial data in Cartesian coordinates.

A preset yields an :class:`AnalyticSource`: a callable that evaluates
``g, p, h`` and their exact derivatives at arbitrary (possibly complex)
Cartesian points.  Symbolic pieces are differentiated once with sympy and
compiled with ``lambdify``; random quadratic perturbations are evaluated
directly with numpy.

Supported presets (JSON ``"preset"`` key):

* ``minkowski`` -- flat ``g``, ``p = 0``.
* ``schwarzschild`` -- ``mass`` and ``slicing``:

  - ``areal``: time-symmetric slice in areal radius, valid for ``r > 2m``;
  - ``isotropic``: time-symmetric slice, ``g = (1 + m/2r)^4 delta``, horizon at ``r = m/2``;
  - ``painleve-gullstrand``: flat ``g`` with
    ``p = s sqrt(2m/r^3) (delta - 3/2 x x / r^2)``; ``time_orientation``
    ``future`` (``s = -1``, outward expansion vanishes at ``r = 2m``) or ``past``.
* ``constant-trace`` -- flat ``g``, ``p = c g``.
* ``polynomial-perturbation`` -- a ``base`` preset plus seeded random
  quadratic polynomials of size ``amplitude`` added to ``g`` and ``p``.
* ``custom`` -- component expressions in the Cartesian coordinate names.

``h`` is a number or an expression string in the coordinates and ``r``.
"""

from functools import lru_cache

import numpy as np
import sympy as sp

from ..errors import ConfigError

__all__ = ["AnalyticSource", "build_source", "cartesian_names", "SPHERICAL_PRESETS"]

SPHERICAL_PRESETS = ("minkowski", "schwarzschild", "constant-trace")
SLICINGS = ("areal", "isotropic", "painleve-gullstrand")


def cartesian_names(n):
    if n <= 4:
        return ("x", "y", "z", "w")[:n]
    return tuple(f"x{i}" for i in range(n))


def _symbols(n):
    xs = sp.symbols(cartesian_names(n), real=True)
    r = sp.sqrt(sum(x ** 2 for x in xs))
    return xs, r


def parse_expression(text, n):
    """Sympy expression in the Cartesian names of dimension ``n`` plus ``r``."""
    xs, r = _symbols(n)
    local = dict(zip(cartesian_names(n), xs))
    local["r"] = r
    if n == 3:
        local["theta"] = sp.acos(xs[2] / r)
        local["phi"] = sp.atan2(xs[1], xs[0])
    try:
        return sp.sympify(text, locals=local)
    except (sp.SympifyError, TypeError, SyntaxError) as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc}") from exc


class _SymbolicTerm:
    """Compiled symbolic contribution with first and second derivatives."""

    def __init__(self, n, g_text, p_text, h_text):
        self.n = n
        self._fn = _compile(n, g_text, p_text, h_text)

    def __call__(self, x):
        n = self.n
        m = n * (n + 1) // 2
        batch = x.shape[:-1]
        dtype = np.result_type(x.dtype, float)
        raw = self._fn(*[x[..., i] for i in range(n)])
        vals = [np.broadcast_to(np.asarray(v, dtype=dtype), batch) for v in raw]
        it = iter(vals)
        out = {
            "g": np.empty(batch + (n, n), dtype), "dg": np.empty(batch + (n, n, n), dtype),
            "ddg": np.empty(batch + (n, n, n, n), dtype),
            "p": np.empty(batch + (n, n), dtype), "dp": np.empty(batch + (n, n, n), dtype),
        }
        pairs = list(zip(*np.triu_indices(n)))
        for key, dkey, ddkey in (("g", "dg", "ddg"), ("p", "dp", None)):
            for i, j in pairs:
                v = next(it)
                out[key][..., i, j] = out[key][..., j, i] = v
                for k in range(n):
                    v = next(it)
                    out[dkey][..., k, i, j] = out[dkey][..., k, j, i] = v
                if ddkey:
                    for k in range(n):
                        for l in range(k, n):
                            v = next(it)
                            for a, b in ((k, l), (l, k)):
                                out[ddkey][..., a, b, i, j] = v
                                out[ddkey][..., a, b, j, i] = v
        out["h"] = next(it).copy()
        out["dh"] = np.stack([next(it) for _ in range(n)], axis=-1)
        assert len(pairs) == m
        return out


@lru_cache(maxsize=64)
def _compile(n, g_text, p_text, h_text):
    xs, _ = _symbols(n)
    pairs = list(zip(*np.triu_indices(n)))
    exprs = []
    for texts, second in ((g_text, True), (p_text, False)):
        for (i, j), t in zip(pairs, texts):
            e = parse_expression(t, n)
            exprs.append(e)
            d1 = [sp.diff(e, x) for x in xs]
            exprs.extend(d1)
            if second:
                for k in range(n):
                    for l in range(k, n):
                        exprs.append(sp.diff(d1[k], xs[l]))
    h = parse_expression(h_text, n)
    exprs.append(h)
    exprs.extend(sp.diff(h, x) for x in xs)
    return sp.lambdify(xs, exprs, modules="numpy", cse=True)


class _QuadraticTerm:
    """Seeded random quadratic polynomials added to g and p components."""

    def __init__(self, n, seed, amplitude, scale, p_amplitude):
        rng = np.random.default_rng(seed)
        m = n * (n + 1) // 2
        self.n = n
        self.scale = float(scale)
        self.coef = {}
        for key, amp in (("g", amplitude), ("p", p_amplitude)):
            c0 = rng.uniform(-1, 1, m)
            b = rng.uniform(-1, 1, (m, n))
            A = rng.uniform(-1, 1, (m, n, n))
            A = 0.5 * (A + A.transpose(0, 2, 1))
            self.coef[key] = (amp * c0, amp * b, amp * A)

    def __call__(self, x):
        n, L = self.n, self.scale
        y = x / L
        out = {}
        pairs = list(zip(*np.triu_indices(n)))
        for key in ("g", "p"):
            c0, b, A = self.coef[key]
            val = c0 + y @ b.T + np.einsum("...i,mij,...j->...m", y, A, y)
            grad = (b[None] + 2 * np.einsum("mij,...j->...mi", A, y)) / L if y.ndim > 1 else None
            if grad is None:
                grad = (b + 2 * np.einsum("mij,j->mi", A, y)) / L
            hess = 2 * A / L ** 2
            full = np.zeros(x.shape[:-1] + (n, n), dtype=val.dtype)
            dfull = np.zeros(x.shape[:-1] + (n, n, n), dtype=val.dtype)
            ddfull = np.zeros(x.shape[:-1] + (n, n, n, n), dtype=val.dtype)
            for k, (i, j) in enumerate(pairs):
                full[..., i, j] = full[..., j, i] = val[..., k]
                dfull[..., :, i, j] = dfull[..., :, j, i] = grad[..., k, :]
                ddfull[..., :, :, i, j] = ddfull[..., :, :, j, i] = hess[k]
            out[key] = full
            out["d" + key] = dfull
            if key == "g":
                out["ddg"] = ddfull
        return out


class AnalyticSource:
    """Sum of closed-form terms evaluated in Cartesian coordinates."""

    def __init__(self, n, terms, description):
        self.n = n
        self.terms = list(terms)
        self.description = description

    def evaluate(self, x):
        x = np.asarray(x)
        total = None
        for term in self.terms:
            part = term(x)
            if total is None:
                total = {k: np.array(v) for k, v in part.items()}
            else:
                for k, v in part.items():
                    total[k] = total[k] + v
        return total


def _radial_form(n, alpha, beta):
    """Component strings of alpha(r) delta_ij + beta(r) x_i x_j / r^2."""
    names = cartesian_names(n)
    out = []
    for i, j in zip(*np.triu_indices(n)):
        parts = []
        if i == j and alpha != "0":
            parts.append(f"({alpha})")
        if beta != "0":
            parts.append(f"({beta})*{names[i]}*{names[j]}/r**2")
        out.append(" + ".join(parts) if parts else "0")
    return tuple(out)


def _base_strings(desc, n):
    """(g strings, p strings) for the symbolic presets."""
    name = desc["preset"]
    if name == "minkowski":
        return _radial_form(n, "1", "0"), _radial_form(n, "0", "0")
    if name == "constant-trace":
        c = float(desc.get("c", 0.0))
        return _radial_form(n, "1", "0"), _radial_form(n, repr(c), "0")
    if name == "schwarzschild":
        if n != 3:
            raise ConfigError("schwarzschild preset is three dimensional")
        m = float(desc.get("mass", 1.0))
        slicing = desc.get("slicing", "areal")
        if slicing == "areal":
            return _radial_form(n, "1", f"1/(1 - 2*{m!r}/r) - 1"), _radial_form(n, "0", "0")
        if slicing == "isotropic":
            return _radial_form(n, f"(1 + {m!r}/(2*r))**4", "0"), _radial_form(n, "0", "0")
        if slicing == "painleve-gullstrand":
            orient = desc.get("time_orientation", "future")
            if orient not in ("future", "past"):
                raise ConfigError(f"unknown time_orientation {orient!r}")
            s = -1.0 if orient == "future" else 1.0
            q = f"{s!r}*sqrt(2*{m!r}/r**3)"
            return _radial_form(n, "1", "0"), _radial_form(n, q, f"-1.5*{q}")
        raise ConfigError(f"unknown schwarzschild slicing {slicing!r}")
    if name == "custom":
        names = cartesian_names(n)
        out = []
        for key in ("g", "p"):
            comps = desc.get(key, {})
            if not isinstance(comps, dict):
                raise ConfigError(f"custom {key} must map component names to expressions")
            strings = []
            for i, j in zip(*np.triu_indices(n)):
                label = names[i] + names[j]
                v = comps.get(label, comps.get(names[j] + names[i]))
                if v is None:
                    v = ("1" if i == j else "0") if key == "g" else "0"
                if not isinstance(v, (str, int, float)):
                    raise ConfigError(f"custom component {label} is not an expression")
                strings.append(str(v))
            out.append(tuple(strings))
        return out[0], out[1]
    raise ConfigError(f"unknown preset {name!r}")


def _h_string(desc):
    h = desc.get("h", 0.0)
    if isinstance(h, (int, float)):
        return repr(float(h))
    if isinstance(h, str):
        return h
    raise ConfigError("h must be a number or an expression string")


def build_source(desc, n):
    """AnalyticSource for a JSON preset description in dimension ``n``."""
    name = desc.get("preset")
    h_text = _h_string(desc)
    if name == "polynomial-perturbation":
        base = dict(desc.get("base", {"preset": "minkowski"}))
        if base.get("preset") == "polynomial-perturbation":
            raise ConfigError("perturbation bases cannot nest")
        base.setdefault("h", desc.get("h", 0.0))
        src = build_source(base, n)
        amp = float(desc.get("amplitude", 1e-3))
        term = _QuadraticTerm(n, int(desc.get("seed", 0)), amp, float(desc.get("scale", 1.0)),
                              float(desc.get("p_amplitude", amp)))
        return AnalyticSource(n, src.terms + [term], desc)
    g_text, p_text = _base_strings(desc, n)
    return AnalyticSource(n, [_SymbolicTerm(n, g_text, p_text, h_text)], desc)
