"""Dyadic frequency decompositions of adjustable size.

The generating cutoff of size n is a mollified trapezoid: the piecewise
linear profile equal to 1 on [0, 2^-n + 1/4], falling with slope -4 to 0
at 2^-n + 1/2, convolved with a compactly supported bump of radius 1/32.
The quadrature normalizes by the bump's own discrete mass on the same
nodes, so plateau values are exactly 1.0 and values beyond the support
are exactly 0.0 in floating point.  The canonical evaluator is linear
interpolation on a fine stored grid; that interpolant, not the ideal
convolution, is the profile every other module sees.

A system of size n on a bound grid scales the cutoff dyadically,
phi_j(xi) = phi(xi / 2^j), takes difference blocks, and closes the
partition with a top cap so the blocks telescope to the identity exactly.
Block p of a size-n system is supported in 2^(p-n-1) < |xi| <= 1.75 * 2^p,
inside the contract annulus 2^(p-(n+1)) <= |xi| <= 2^(p+(n+1)).
"""

import math

import numpy as np

from .core import GridFunction, InputError, apply_multiplier, lp_norm
from .reports import make_decay_report

MOLLIFIER_RADIUS = 1.0 / 32.0
MOLLIFIER_NODES = 512
DEFAULT_RESOLUTION = 1.0 / 1024.0
GRID_EXTENT = 2.0  # every size-n profile vanishes beyond 2^-n + 17/32 < 2


def _trapezoid(t, n):
    b = 2.0**-n + 0.5
    return np.clip(4.0 * (b - np.abs(t)), 0.0, 1.0)


def _bump_weights(order=0):
    """Unnormalized bump (or derivative) node values plus the shared mass.

    Dividing by the mass once, after the convolution sum, keeps plateau
    values exactly 1.0: there the sum equals the mass bit for bit.
    """
    r = MOLLIFIER_RADIUS
    step = 2.0 * r / MOLLIFIER_NODES
    s = -r + (np.arange(MOLLIFIER_NODES) + 0.5) * step
    q = s / r
    g = np.exp(-1.0 / (1.0 - q**2))
    mass = g.sum()
    if order == 0:
        return s, g, mass
    u1 = -2.0 * q / (1.0 - q**2) ** 2
    if order == 1:
        return s, g * u1 / r, mass
    u2 = (-2.0 - 6.0 * q**2) / (1.0 - q**2) ** 3
    if order == 2:
        return s, g * (u1**2 + u2) / r**2, mass
    u3 = -24.0 * q * (1.0 + q**2) / (1.0 - q**2) ** 4
    if order == 3:
        return s, g * (u1**3 + 3.0 * u1 * u2 + u3) / r**3, mass
    raise InputError("bump derivatives implemented up to order 3")


def _mollified(xi, n, order=0):
    """Pointwise quadrature for the mollified trapezoid or a derivative proxy."""
    s, w, _ = _bump_weights(order)
    mat = _trapezoid(xi[:, None] - s[None, :], n)
    num = mat @ w
    # route the mass through the same matvec kernel so plateau rows (all
    # ones) divide to exactly 1.0
    g = _bump_weights(0)[1]
    mass = (np.ones((1, g.shape[0])) @ g)[0]
    vals = num / mass
    if order == 0:
        vals = np.clip(vals, 0.0, 1.0)
    return vals


class CutoffProfile:
    """Size-n generating cutoff, evaluated by interpolation on a fine grid."""

    def __init__(self, size_n, xi_grid, values, resolution):
        self.size_n = int(size_n)
        self.xi_grid = np.asarray(xi_grid, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        self.resolution = float(resolution)
        if self.xi_grid.shape != self.values.shape:
            raise InputError("cutoff grid and values must have equal shape")
        half = self.xi_grid.shape[0] // 2
        self._pos_grid = self.xi_grid[half:]
        self._pos_vals = self.values[half:]

    @property
    def plateau_edge(self):
        return 2.0**-self.size_n + 0.25 - MOLLIFIER_RADIUS

    @property
    def support_edge(self):
        return 2.0**-self.size_n + 0.5 + MOLLIFIER_RADIUS

    def __call__(self, xi):
        xi = np.abs(np.asarray(xi, dtype=np.float64))
        return np.interp(xi, self._pos_grid, self._pos_vals, right=0.0)

    def derivative_values(self, order):
        """Proxy values of the order-th derivative on the stored grid."""
        if order < 1 or order > 3:
            raise InputError("derivative proxies available for orders 1..3")
        return _mollified(self.xi_grid, self.size_n, order)

    def weighted_l1_proxy(self, alpha, beta):
        """Discrete L1 norm of x^beta d^alpha of the profile's kernel.

        The kernel (inverse transform of the profile) is computed by FFT
        quadrature on the stored fine grid; the derivative enters as the
        multiplier (i xi)^alpha.  These weighted kernel norms are the
        measurable face of the profile's symbol-class seminorms.
        """
        if alpha < 0 or beta < 0 or alpha > 3 or beta > 3:
            raise InputError("kernel proxies available for alpha, beta in 0..3")
        vals = (1j * self.xi_grid) ** alpha * self.values
        m = self.xi_grid.shape[0] - 1  # even count; drop the duplicated endpoint
        spec = np.fft.ifftshift(vals[:m])
        kernel = np.fft.fft(spec) * (self.resolution / (2.0 * np.pi))
        x = 2.0 * np.pi * np.fft.fftfreq(m, d=self.resolution)
        return float(np.sum(np.abs(x**beta * kernel)) * (x[1] - x[0]))

    def to_dict(self):
        return {
            "size_n": self.size_n,
            "xi_grid": self.xi_grid.tolist(),
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, payload):
        grid = np.asarray(payload["xi_grid"], dtype=np.float64)
        res = float(grid[1] - grid[0]) if grid.shape[0] > 1 else DEFAULT_RESOLUTION
        return cls(payload["size_n"], grid, payload["values"], res)


def build_cutoff(n, resolution=DEFAULT_RESOLUTION):
    """Construct the size-n generating cutoff on its fine evaluation grid."""
    if n != int(n) or not (0 <= n <= 8):
        raise InputError(f"cutoff size must be an integer in [0, 8], got {n}")
    n = int(n)
    resolution = float(resolution)
    if not (0 < resolution <= 1.0 / 64.0):
        raise InputError(
            f"resolution must lie in (0, 1/64] to resolve the mollifier, got {resolution}"
        )
    m = int(round(GRID_EXTENT / resolution))
    xi_grid = np.arange(-m, m + 1) * resolution
    # evaluate on the nonnegative half and mirror so evenness is exact
    pos = _mollified(xi_grid[m:], n)
    values = np.concatenate([pos[:0:-1], pos])
    return CutoffProfile(n, xi_grid, values, resolution)


class DyadicSystem:
    """Dyadic partition bound to a fixed periodic grid.

    Lowpass multipliers S_j act by phi(xi / 2^j); difference blocks
    Delta_p = S_p - S_(p-1) for 1 <= p < p_max, Delta_0 = S_0, and the top
    cap Delta_(p_max) = I - S_(p_max - 1) absorbs the grid's highest
    frequencies so the blocks sum to the identity exactly.
    """

    def __init__(self, cutoff, period, n_points):
        self.cutoff = cutoff
        self.period = float(period)
        self.n_points = int(n_points)
        self.freqs = 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.period / self.n_points)
        xi_max = np.pi * self.n_points / self.period
        self.xi_max = xi_max
        self.p_max = max(1, math.ceil(cutoff.size_n + math.log2(xi_max) - 1e-9))
        self.N0 = 2 * (cutoff.size_n + 1)
        self._lowpass_cache = {}
        self._block_cache = {}

    @property
    def size_n(self):
        return self.cutoff.size_n

    def lowpass_values(self, xi, j):
        """phi(xi / 2^j) for integer or fractional scale j."""
        if j >= self.p_max:
            return np.ones_like(np.asarray(xi, dtype=np.float64))
        return self.cutoff(np.asarray(xi, dtype=np.float64) / 2.0**j)

    def lowpass_multiplier(self, j):
        key = int(j) if j == int(j) else float(j)
        cached = self._lowpass_cache.get(key)
        if cached is None:
            cached = self.lowpass_values(self.freqs, j)
            cached.setflags(write=False)
            self._lowpass_cache[key] = cached
        return cached

    def block_multiplier(self, p):
        if p != int(p) or p < 0 or p > self.p_max:
            raise InputError(f"block index must be an integer in [0, {self.p_max}], got {p}")
        p = int(p)
        cached = self._block_cache.get(p)
        if cached is None:
            if p == 0:
                cached = self.lowpass_multiplier(0).copy()
            elif p == self.p_max:
                cached = 1.0 - self.lowpass_multiplier(p - 1)
            else:
                cached = self.lowpass_multiplier(p) - self.lowpass_multiplier(p - 1)
            cached.setflags(write=False)
            self._block_cache[p] = cached
        return cached

    def _check_grid(self, f):
        if f.period != self.period or f.n != self.n_points:
            raise InputError("grid function does not live on this system's grid")

    def lowpass(self, f, j):
        self._check_grid(f)
        return apply_multiplier(f, self.lowpass_multiplier(j))

    def block(self, f, p):
        self._check_grid(f)
        return apply_multiplier(f, self.block_multiplier(p))

    def blocks(self, f):
        return [self.block(f, p) for p in range(self.p_max + 1)]

    def contract_support(self, p):
        """The loose contract annulus for block p (exact support is tighter)."""
        n = self.size_n
        return 2.0 ** (p - (n + 1)), 2.0 ** (p + (n + 1))

    def exact_support(self, p):
        n = self.size_n
        lo = 2.0 ** (p - 1) * self.cutoff.plateau_edge if p >= 1 else 0.0
        hi = 2.0**p * self.cutoff.support_edge
        if p == self.p_max:
            hi = self.xi_max
        return lo, hi

    def zygmund(self, f, s):
        """Hoelder-Zygmund norm: sup_q 2^(qs) of the sup norm of block q."""
        self._check_grid(f)
        best = 0.0
        for q in range(self.p_max + 1):
            val = 2.0 ** (q * s) * lp_norm(self.block(f, q), np.inf)
            best = max(best, val)
        return best

    def partition_residual(self, f):
        """Sup distance between f and the sum of all its blocks."""
        self._check_grid(f)
        total = np.zeros(self.n_points, dtype=np.complex128)
        for p in range(self.p_max + 1):
            total += self.block(f, p).samples
        return float(np.max(np.abs(total - f.samples)))


def _banded_noise(rng, freqs, lo, hi):
    """Random-phase complex noise with spectrum confined to lo <= |xi| <= hi."""
    n = freqs.shape[0]
    spec = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    spec[(np.abs(freqs) < lo) | (np.abs(freqs) > hi)] = 0.0
    return spec


def measure_bernstein(
    period=2.0 * np.pi,
    n_points=1024,
    alpha=1,
    j_range=None,
    sizes=(0, 1, 2, 3, 4),
    trials=20,
    seed=7,
    reverse=False,
):
    """Measure Bernstein ratios across block index, trials, and system sizes.

    Forward mode records |d^alpha Delta_j u|_inf / (2^(j alpha) |u|_inf);
    reverse mode records 2^j |Delta_j u|_inf / |d Delta_j u|_inf.  Trials are
    random-phase functions band-limited to the exact support of the block
    under test, so each ratio estimates that block's saturated operator
    constant rather than how much of a wide input the block happens to keep.
    """
    if alpha not in (0, 1, 2):
        raise InputError("alpha must be 0, 1, or 2")
    systems = {n: DyadicSystem(build_cutoff(n), period, n_points) for n in sizes}
    p_cap = min(sys.p_max for sys in systems.values())
    if j_range is None:
        j_range = range(2, p_cap)
    j_list = [j for j in j_range if 1 <= j < p_cap]
    if len(j_list) < 4:
        raise InputError("need at least 4 usable block indices")

    rng = np.random.default_rng(seed)

    per_size_const = {}
    per_j_max = {j: 0.0 for j in j_list}
    for n, system in systems.items():
        best = 0.0
        for j in j_list:
            lo, hi = system.exact_support(j)
            for _ in range(trials):
                spec = _banded_noise(rng, system.freqs, lo, hi)
                u = GridFunction.from_spectrum(period, spec)
                block = system.block(u, j)
                if reverse:
                    denom = lp_norm(block.derivative(), np.inf)
                    if denom == 0.0:
                        continue
                    ratio = 2.0**j * lp_norm(block, np.inf) / denom
                else:
                    ratio = lp_norm(block.derivative(alpha), np.inf) / (
                        2.0 ** (j * alpha) * lp_norm(u, np.inf)
                    )
                best = max(best, ratio)
                per_j_max[j] = max(per_j_max[j], ratio)
        per_size_const[n] = best

    consts = list(per_size_const.values())
    factor = max(consts) / min(consts) if min(consts) > 0 else np.inf
    env = {
        "alpha": alpha,
        "reverse": bool(reverse),
        "per_size_constant": {str(k): v for k, v in per_size_const.items()},
        "cross_size_factor": factor,
        "trials": trials,
        "seed": seed,
        "grid": {"period": period, "n_points": n_points},
    }
    if reverse:
        # the reverse constants are only claimed finite per size, not uniform
        ok = bool(np.isfinite(consts).all())
    else:
        ok = bool(factor <= 2.0)
    return make_decay_report(
        "bernstein" + ("-reverse" if reverse else ""),
        j_list,
        [per_j_max[j] for j in j_list],
        expected_bound=0.0,
        tolerance=0.25 if not reverse else 1e6,
        environment=env,
        direction="flat",
        extra_pass=ok,
    )
