"""Sinusoidal fringe patterns and their analytic absolute phase.

Patterns are defined as continuous functions of the projector column and only
rasterized for export, so the simulator can sample them without quantization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi
DEFAULT_SHIFT = TWO_PI / 3.0


@dataclass(frozen=True)
class FringeSpec:
    """Parameters of a three-step sinusoidal fringe set.

    ``pitch`` is the sinusoid period in projector pixels; ``mean`` and
    ``modulation`` are the average intensity and amplitude on a [0, 1] scale.
    """

    pitch: float
    shift: float = DEFAULT_SHIFT
    mean: float = 0.5
    modulation: float = 0.45
    steps: int = 3

    def __post_init__(self) -> None:
        if self.pitch <= 0:
            raise ValueError("pitch must be positive")
        if self.mean - self.modulation < 0 or self.mean + self.modulation > 1:
            raise ValueError("intensities must stay within [0, 1]")
        if self.steps != 3:
            raise ValueError("only three-step patterns are supported")


def pattern_intensity(spec: FringeSpec, u_p, step: int):
    """Intensity of pattern ``step`` (1..3) at continuous projector column ``u_p``.

    The second step carries zero shift; steps 1 and 3 are shifted by
    ``-shift`` and ``+shift``.
    """
    if step not in (1, 2, 3):
        raise ValueError("step must be 1, 2 or 3")
    phase = TWO_PI * np.asarray(u_p, dtype=float) / spec.pitch
    value = spec.mean + spec.modulation * np.cos(phase + (step - 2) * spec.shift)
    if np.isscalar(u_p):
        return float(value)
    return value


def absolute_phase(pitch: float, u_p):
    """Absolute phase ``2*pi*u_p/pitch`` of projector column ``u_p``."""
    if pitch <= 0:
        raise ValueError("pitch must be positive")
    value = TWO_PI * np.asarray(u_p, dtype=float) / pitch
    if np.isscalar(u_p):
        return float(value)
    return value


def rasterize_pattern(spec: FringeSpec, resolution: tuple[int, int], step: int) -> np.ndarray:
    """Render one pattern to a ``(height, width)`` float array.

    Pixel ``(u, v)`` holds the intensity at column center ``u + 0.5``; all rows
    are identical because the fringes vary only along the projector's u axis.
    """
    width, height = resolution
    row = pattern_intensity(spec, np.arange(width) + 0.5, step)
    return np.broadcast_to(row, (height, width)).astype(np.float32).copy()
