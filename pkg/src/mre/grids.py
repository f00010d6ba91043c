"""Labeled N-dimensional arrays used as the common carrier for images and k-space."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Axis labels understood across the package.
KNOWN_AXES = ("x", "y", "slice", "channel", "shot", "te", "coeff")


@dataclass
class ComplexGrid:
    """An ndarray plus ordered axis labels.

    ``data`` is usually complex but real grids (field maps, magnitude images,
    label maps) ride in the same container. Axis labels must be unique; they
    are how operations such as the centered DFT select axes.
    """

    data: np.ndarray
    axes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if not self.axes:
            self.axes = _default_axes(self.data.ndim)
        self.axes = tuple(self.axes)
        if len(self.axes) != self.data.ndim:
            raise ValueError(
                f"{len(self.axes)} axis labels for a {self.data.ndim}-d array"
            )
        if len(set(self.axes)) != len(self.axes):
            raise ValueError(f"duplicate axis labels: {self.axes}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def axis_index(self, label: str) -> int:
        try:
            return self.axes.index(label)
        except ValueError:
            raise KeyError(f"grid has no axis {label!r} (axes: {self.axes})") from None

    def with_data(self, data: np.ndarray) -> "ComplexGrid":
        """Same labels, new samples. Shape must be unchanged."""
        data = np.asarray(data)
        if data.shape != self.data.shape:
            raise ValueError(f"shape changed {self.data.shape} -> {data.shape}")
        return ComplexGrid(data, self.axes)

    def copy(self) -> "ComplexGrid":
        return ComplexGrid(self.data.copy(), self.axes)


def _default_axes(ndim: int) -> tuple[str, ...]:
    # Trailing axes default to spatial (x, y); leading ones stay anonymous.
    if ndim == 1:
        return ("x",)
    if ndim == 2:
        return ("x", "y")
    if ndim == 3:
        return ("channel", "x", "y")
    return tuple(f"dim{i}" for i in range(ndim - 2)) + ("x", "y")


def as_array(x) -> np.ndarray:
    """Unwrap a ComplexGrid (or pass an ndarray through)."""
    if isinstance(x, ComplexGrid):
        return x.data
    return np.asarray(x)


def as_grid(x, axes: tuple[str, ...] | None = None) -> ComplexGrid:
    """Wrap an ndarray (or re-label an existing grid)."""
    if isinstance(x, ComplexGrid):
        if axes is not None and tuple(axes) != x.axes:
            return ComplexGrid(x.data, tuple(axes))
        return x
    return ComplexGrid(np.asarray(x), tuple(axes) if axes else ())
