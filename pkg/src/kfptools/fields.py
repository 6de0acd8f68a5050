"""Tensor-grid sampled scalar fields over space-time boxes.

A GridField stores samples of a scalar function on the tensor grid of a
rectangular box.  Axis order is (x_1, ..., x_N, t); every axis is a uniform
linspace and carries trapezoidal quadrature weights.  Weighted sums of the
samples approximate Lebesgue integrals over the box.
"""

from dataclasses import dataclass
import json

import numpy as np

from .errors import ShapeMismatch


@dataclass(frozen=True)
class GridField:
    box: tuple          # per-axis (lo, hi)
    shape: tuple        # per-axis node counts
    values: np.ndarray  # flat array, C-order over the axes

    def __post_init__(self):
        if int(np.prod(self.shape)) != self.values.size:
            raise ShapeMismatch(f"shape {self.shape} does not match {self.values.size} values")

    @property
    def ndim(self):
        return len(self.shape)

    def axis(self, i):
        lo, hi = self.box[i]
        return np.linspace(lo, hi, self.shape[i])

    def axes(self):
        return [self.axis(i) for i in range(self.ndim)]

    def spacing(self, i):
        lo, hi = self.box[i]
        return (hi - lo) / (self.shape[i] - 1) if self.shape[i] > 1 else (hi - lo)

    def axis_weights(self, i):
        n = self.shape[i]
        w = np.full(n, self.spacing(i))
        if n > 1:
            w[0] *= 0.5
            w[-1] *= 0.5
        else:
            w[:] = 1.0
        return w

    def weights(self):
        """Tensor-product trapezoidal weights, same shape as the grid."""
        w = self.axis_weights(0)
        for i in range(1, self.ndim):
            w = np.multiply.outer(w, self.axis_weights(i))
        return w

    def grid(self):
        return self.values.reshape(self.shape)

    def integral(self):
        return float(np.sum(self.weights() * self.grid()))

    def lp_norm(self, p):
        if p == np.inf:
            return float(np.max(np.abs(self.values)))
        return float(np.sum(self.weights() * np.abs(self.grid()) ** p) ** (1.0 / p))

    def with_values(self, values):
        return GridField(self.box, self.shape, np.asarray(values, float).ravel())

    def mesh(self):
        """Meshgrid arrays (ij indexing), one per axis."""
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self):
        """All grid nodes as an (n_nodes, ndim) array."""
        return np.stack([m.ravel() for m in self.mesh()], axis=-1)

    def interp(self, pts):
        """Multilinear interpolation at an (m, ndim) array of points."""
        from scipy.interpolate import RegularGridInterpolator
        f = RegularGridInterpolator(self.axes(), self.grid(), bounds_error=False,
                                    fill_value=None)
        return f(np.atleast_2d(pts))

    def refine(self, factor=2):
        """Same box with (n-1)*factor+1 nodes per axis; multilinear resample."""
        new_shape = tuple((n - 1) * factor + 1 if n > 1 else 1 for n in self.shape)
        out = field_from_function(self.box, new_shape, lambda P: self.interp(P))
        return out

    # --- serialization: flat CSV of values + JSON sidecar with geometry ---

    def save(self, path_values, path_sidecar):
        np.savetxt(path_values, self.values, delimiter=",")
        with open(path_sidecar, "w") as fh:
            json.dump({"box": [list(b) for b in self.box], "shape": list(self.shape)}, fh)

    @staticmethod
    def load(path_values, path_sidecar):
        with open(path_sidecar) as fh:
            meta = json.load(fh)
        vals = np.loadtxt(path_values, delimiter=",")
        return GridField(tuple(tuple(b) for b in meta["box"]), tuple(meta["shape"]),
                         np.asarray(vals, float).ravel())


def field_from_function(box, shape, fn):
    """Sample fn over the tensor grid.  fn takes an (m, ndim) point array."""
    box = tuple(tuple(b) for b in box)
    shape = tuple(int(n) for n in shape)
    axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(box, shape)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    vals = np.asarray(fn(pts), float).ravel()
    return GridField(box, shape, vals)


def zero_field(box, shape):
    return GridField(tuple(tuple(b) for b in box), tuple(shape),
                     np.zeros(int(np.prod(shape))))
