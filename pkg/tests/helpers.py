"""Builders shared across the test modules."""

import numpy as np

from twqr.panel import PanelArray


def grid_panel(G, H, x, y):
    """Balanced panel over the full G x H grid, row-major cell order."""
    g_idx = np.repeat(np.arange(G), H)
    h_idx = np.tile(np.arange(H), G)
    return PanelArray(G=G, H=H, g_idx=g_idx, h_idx=h_idx,
                      y=np.asarray(y, dtype=float),
                      x=np.asarray(x, dtype=float))


def random_panel(rng, G, H, d, noise=1.0):
    """Full grid, intercept plus standard normal slopes, y = x.1 + noise."""
    n = G * H
    x = np.column_stack([np.ones(n), rng.standard_normal((n, d - 1))]) if d > 1 \
        else np.ones((n, 1))
    y = x.sum(axis=1) + noise * rng.standard_normal(n)
    return grid_panel(G, H, x, y)
