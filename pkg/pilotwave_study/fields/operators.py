"""
Differential and integral operators on grid fields.

All derivatives are second-order central differences. Periodic axes wrap;
dirichlet axes use one-sided second-order stencils on the two edge nodes.
"""
import itertools
from typing import List, Sequence, Union
import numpy as np
from scipy.integrate import cumulative_trapezoid, cumulative_simpson
from pilotwave_study.fields.grid import Grid, Field, RealField, ComplexField, as_values


def _check_axis(grid: Grid, axis: int) -> None:
    if not 0 <= axis < grid.ndim:
        raise ValueError(f'axis {axis} out of range for a {grid.ndim}-dimensional grid')


def diff_values(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """
    Central first derivative of a raw (real or complex) array along axis.
    The array's trailing dimensions must match the grid.
    """
    _check_axis(grid, axis)
    h = grid.spacing[axis]
    ax = values.ndim - grid.ndim + axis
    if grid.periodic[axis]:
        return (np.roll(values, -1, axis=ax) - np.roll(values, 1, axis=ax)) / (2 * h)
    return np.gradient(values, h, axis=ax, edge_order=2)


def gradient(f: RealField, axis: int) -> RealField:
    """Partial derivative of f along axis."""
    return RealField(f.grid, diff_values(f.values, f.grid, axis), f.t)


def gradients(f: RealField) -> List[RealField]:
    return [gradient(f, axis) for axis in range(f.grid.ndim)]


def raise_index(components: Sequence[np.ndarray], grid: Grid, metric: np.ndarray = None) -> List[np.ndarray]:
    """Contracts a covector with the metric: w_i = sum_j mu_ij v_j."""
    metric = grid.metric if metric is None else np.asarray(metric)
    if metric.ndim == 1:
        return [metric[i] * components[i] for i in range(grid.ndim)]
    return [sum(metric[i, j] * components[j] for j in range(grid.ndim)) for i in range(grid.ndim)]


def divergence(v: Sequence[Union[RealField, np.ndarray]], weights: Union[np.ndarray, str, None] = None,
               grid: Grid = None) -> RealField:
    """
    Discrete divergence sum_i d_i v_i.

    Args:
        v: one component per axis
        weights: optional metric; when given the generalized divergence
            sum_i d_i (sum_j mu_ij v_j) is returned. Pass 'grid' to use the grid's own metric.
        grid: required only when v holds raw arrays
    """
    if grid is None:
        grid = v[0].grid
    if len(v) != grid.ndim:
        raise ValueError(f'{len(v)} components given for a {grid.ndim}-dimensional grid')
    components = [as_values(c) for c in v]
    if isinstance(weights, str) and weights == 'grid':
        components = raise_index(components, grid)
    elif weights is not None:
        components = raise_index(components, grid, weights)
    total = sum(diff_values(c, grid, axis) for axis, c in enumerate(components))
    t = v[0].t if isinstance(v[0], Field) else 0.0
    return RealField(grid, total, t)


def laplacian(f: RealField, metric: np.ndarray = None) -> RealField:
    """The operator sum_ij d_i(mu_ij d_j f) built from gradient and divergence."""
    return divergence(gradients(f), weights=f.grid.metric if metric is None else metric)


def integrate(f: Union[Field, np.ndarray], grid: Grid = None):
    """Riemann sum (periodic axes) / trapezoid (dirichlet axes) over the whole grid."""
    grid = f.grid if grid is None else grid
    values = as_values(f)
    return np.sum(values * grid.quadrature_weights(), axis=tuple(range(values.ndim - grid.ndim, values.ndim)))


def cumulative_integral(f: RealField, axis: int, a: float, method: str = 'trapezoid') -> RealField:
    """
    Running integral along axis from the node nearest a, per grid line.
    The result vanishes on the nodes nearest q_axis = a.

    Args:
        f: integrand
        axis: integration axis
        a: reference point inside the axis bounds
        method: 'trapezoid' (second order) or 'simpson' (fourth order)
    """
    grid = f.grid
    _check_axis(grid, axis)
    lo, hi = grid.lower[axis], grid.upper[axis]
    if not lo <= a <= hi:
        raise ValueError(f'reference point {a} outside axis bounds [{lo}, {hi}]')
    h = grid.spacing[axis]
    if method == 'trapezoid':
        running = cumulative_trapezoid(f.values, dx=h, axis=axis, initial=0)
    elif method == 'simpson':
        running = cumulative_simpson(f.values, dx=h, axis=axis, initial=0)
    else:
        raise ValueError(f'unknown integration method {method!r}')
    k = int(np.clip(np.rint((a - lo) / h), 0, grid.counts[axis] - 1))
    reference = np.take(running, [k], axis=axis)
    return RealField(grid, running - reference, f.t)


def interpolate_points(values: np.ndarray, grid: Grid, points: np.ndarray, check: bool = True) -> np.ndarray:
    """
    Multilinear interpolation over the 2^n enclosing corners.

    Args:
        values: array whose trailing dimensions match the grid; leading
            dimensions (e.g. vector components) are carried through
        points: (N, n) coordinates; periodic axes wrap
        check: raise for points outside a dirichlet axis range
    Returns:
        array of shape (*leading, N)
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != grid.ndim:
        raise ValueError(f'points must have {grid.ndim} coordinates')
    lower_index, upper_index, weights = [], [], []
    for axis in range(grid.ndim):
        n = grid.counts[axis]
        s = (points[:, axis] - grid.lower[axis]) / grid.spacing[axis]
        if grid.periodic[axis]:
            s = np.mod(s, n)
            i0 = np.floor(s).astype(np.int64)
            w = s - i0
            i0 = np.mod(i0, n)
            i1 = np.mod(i0 + 1, n)
        else:
            if check and (np.any(s < -1e-9) or np.any(s > n - 1 + 1e-9)):
                raise ValueError(f'point outside the dirichlet range of axis {axis}')
            s = np.clip(s, 0, n - 1)
            i0 = np.clip(np.floor(s).astype(np.int64), 0, n - 2)
            w = s - i0
            i1 = i0 + 1
        lower_index.append(i0)
        upper_index.append(i1)
        weights.append(w)

    result = 0.0
    for corner in itertools.product((0, 1), repeat=grid.ndim):
        index = tuple(upper_index[a] if c else lower_index[a] for a, c in enumerate(corner))
        weight = np.prod([weights[a] if c else 1 - weights[a] for a, c in enumerate(corner)], axis=0)
        result = result + weight * values[(Ellipsis,) + index]
    return result


def interpolate(f: Union[RealField, ComplexField], point: Sequence[float]):
    """Value of f at a single continuous point."""
    return interpolate_points(f.values, f.grid, np.asarray(point, dtype=float)[None, :])[0]
