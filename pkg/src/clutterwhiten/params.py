"""Filter configuration: analysis-window geometry, bandwidth, smoothing and
velocity-grid parameters, plus the flat key/value parameter-file format.

All sizes derive from the half-window and half-bandwidth integers:
window length ``M = 2K + 1`` (odd), synthesis order ``W = 2B + 1``, and
center offset ``delta = (M - 1) / 2`` per dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

__all__ = [
    "FilterParams",
    "ParamError",
    "default_params",
    "validate",
    "load_params",
    "save_params",
    "params_from_mapping",
]

# 17 lags from -2 to +2 in steps of 1/4: max velocity 2 px/frame, grid 1/4.
DEFAULT_LAG_GRID = tuple(i / 4.0 for i in range(-8, 9))

DEFAULT_ALPHA = math.exp(-0.1)


class ParamError(ValueError):
    """A filter parameter violates its documented constraint."""


@dataclass(frozen=True)
class FilterParams:
    """Design constants for the whitening filter.

    Attributes
    ----------
    kx, ky : int
        Spatial half-window sizes in samples.
    kz : int
        Temporal half-window size in frames.
    bx, by : int
        Spatial half-bandwidths in bins; must satisfy ``b < k``.
    mhat : (int, int, int)
        Group-delay vector ``(mhat_x, mhat_y, mhat_z)`` in samples.
    alpha : float
        Autocorrelation smoothing pole, in (0, 1).
    lag_grid_x, lag_grid_y : tuple of float
        Ordered fractional spatial lags (pixels) used as velocity
        hypotheses at temporal lag 1.
    """

    kx: int = 4
    ky: int = 4
    kz: int = 2
    bx: int = 3
    by: int = 3
    mhat: tuple[int, int, int] = (4, 4, 2)
    alpha: float = DEFAULT_ALPHA
    lag_grid_x: tuple[float, ...] = DEFAULT_LAG_GRID
    lag_grid_y: tuple[float, ...] = DEFAULT_LAG_GRID

    # -- derived window sizes ------------------------------------------------

    @property
    def mx(self) -> int:
        return 2 * self.kx + 1

    @property
    def my(self) -> int:
        return 2 * self.ky + 1

    @property
    def mz(self) -> int:
        return 2 * self.kz + 1

    @property
    def wx(self) -> int:
        return 2 * self.bx + 1

    @property
    def wy(self) -> int:
        return 2 * self.by + 1

    @property
    def delta(self) -> tuple[int, int, int]:
        """Center offset (M - 1) / 2 per dimension."""
        return ((self.mx - 1) // 2, (self.my - 1) // 2, (self.mz - 1) // 2)

    @property
    def bin_count(self) -> int:
        """Bins per pixel in the local spectrum (405 for defaults)."""
        return self.mx * self.my * self.mz

    @property
    def retained_count(self) -> int:
        """Coefficients per prediction filter (245 for defaults)."""
        return self.wx * self.wy * self.mz

    @property
    def latency(self) -> int:
        """Output delay in frames (mhat_z)."""
        return self.mhat[2]


def default_params() -> FilterParams:
    """Return the reference parameterization (9x9x5 window, bandwidth 3,
    group delay (4, 4, 2), alpha = e^(-1/10), lag grid -2..+2 by 1/4)."""
    return FilterParams()


def validate(params: FilterParams) -> None:
    """Check every FilterParams invariant, raising ParamError with the first
    violated rule."""
    for name in ("kx", "ky", "kz", "bx", "by"):
        v = getattr(params, name)
        if not isinstance(v, int):
            raise ParamError(f"{name} must be an integer, got {v!r}")
    if params.kx < 1 or params.ky < 1 or params.kz < 1:
        raise ParamError(
            f"half-window sizes must be >= 1, got kx={params.kx} "
            f"ky={params.ky} kz={params.kz}"
        )
    if params.bx < 0 or params.bx >= params.kx:
        raise ParamError(
            f"bandwidth must satisfy B < K (bx={params.bx}, kx={params.kx})"
        )
    if params.by < 0 or params.by >= params.ky:
        raise ParamError(
            f"bandwidth must satisfy B < K (by={params.by}, ky={params.ky})"
        )
    if len(params.mhat) != 3:
        raise ParamError(f"mhat must have 3 components, got {params.mhat!r}")
    for comp, m in zip(params.mhat, (params.mx, params.my, params.mz)):
        if not 0 <= comp <= m - 1:
            raise ParamError(
                f"group delay component {comp} outside window [0, {m - 1}]"
            )
    if not 0.0 < params.alpha < 1.0:
        raise ParamError(
            f"smoothing pole must be in (0,1), got alpha={params.alpha}"
        )
    lag_limit = (min(params.mx, params.my) - 1) / 2.0
    for axis, grid in (("x", params.lag_grid_x), ("y", params.lag_grid_y)):
        if len(grid) == 0:
            raise ParamError(f"lag_grid_{axis} must not be empty")
        if any(not math.isfinite(v) for v in grid):
            raise ParamError(f"lag_grid_{axis} contains non-finite values")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ParamError(f"lag_grid_{axis} must be strictly increasing")
        if max(abs(v) for v in grid) > lag_limit:
            raise ParamError(
                f"lag_grid_{axis} span exceeds half the analysis window "
                f"(max |lag| {max(abs(v) for v in grid)} > {lag_limit}); "
                "lags must stay well inside the window"
            )


# -- parameter file ----------------------------------------------------------
#
# Flat "name = value" lines, '#' starts a comment, unknown keys rejected.
# List values (mhat, lag grids) are comma-separated.

_SCALAR_INT_KEYS = ("kx", "ky", "kz", "bx", "by")


def params_from_mapping(mapping: dict[str, str]) -> FilterParams:
    """Build FilterParams from parsed key/value strings; unknown keys and
    malformed values raise ParamError."""
    params = default_params()
    for key, raw in mapping.items():
        try:
            if key in _SCALAR_INT_KEYS:
                params = replace(params, **{key: int(raw)})
            elif key == "alpha":
                params = replace(params, alpha=float(raw))
            elif key == "mhat":
                parts = tuple(int(p) for p in raw.split(","))
                params = replace(params, mhat=parts)
            elif key == "lag_grid":
                grid = tuple(float(p) for p in raw.split(","))
                params = replace(params, lag_grid_x=grid, lag_grid_y=grid)
            elif key == "lag_grid_x":
                params = replace(
                    params, lag_grid_x=tuple(float(p) for p in raw.split(","))
                )
            elif key == "lag_grid_y":
                params = replace(
                    params, lag_grid_y=tuple(float(p) for p in raw.split(","))
                )
            else:
                raise ParamError(f"unknown parameter key: {key!r}")
        except ParamError:
            raise
        except ValueError as exc:
            raise ParamError(f"bad value for {key!r}: {raw!r} ({exc})") from exc
    validate(params)
    return params


def load_params(path) -> FilterParams:
    """Read a parameter file (one ``name = value`` per line)."""
    mapping: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParamError(f"{path}:{lineno}: expected 'name = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if key in mapping:
                raise ParamError(f"{path}:{lineno}: duplicate key {key!r}")
            mapping[key] = value.strip()
    return params_from_mapping(mapping)


def save_params(params: FilterParams, path) -> None:
    """Write a parameter file that load_params round-trips."""
    lines = [
        "# whitening filter parameters",
        f"kx = {params.kx}",
        f"ky = {params.ky}",
        f"kz = {params.kz}",
        f"bx = {params.bx}",
        f"by = {params.by}",
        f"mhat = {','.join(str(v) for v in params.mhat)}",
        f"alpha = {params.alpha!r}",
        f"lag_grid_x = {','.join(repr(v) for v in params.lag_grid_x)}",
        f"lag_grid_y = {','.join(repr(v) for v in params.lag_grid_y)}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def params_as_dict(params: FilterParams) -> dict:
    """JSON-friendly echo of the parameter set (for run metadata)."""
    return {
        "kx": params.kx,
        "ky": params.ky,
        "kz": params.kz,
        "bx": params.bx,
        "by": params.by,
        "mhat": list(params.mhat),
        "alpha": params.alpha,
        "lag_grid_x": list(params.lag_grid_x),
        "lag_grid_y": list(params.lag_grid_y),
    }
