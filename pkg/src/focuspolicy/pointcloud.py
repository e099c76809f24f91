"""Object point clouds: sampling from simple shapes, FPS downsampling, encoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from . import numerics as nx

CLOUD_POINTS = 32  # per-object size after downsampling
RAW_POINTS = 96  # points sampled before downsampling
LOCAL_SCALE = 10.0  # centroid-relative coordinates are multiplied by this
HIDDEN = (64, 128)
D_PC = 64


@dataclass(frozen=True)
class Part:
    """A disc (possibly elliptical) or axis-aligned rectangle, offset from the object pose."""

    kind: str  # "disc" or "rect"
    half: tuple  # radii for a disc, half extents for a rect
    offset: tuple = (0.0, 0.0)

    @property
    def area(self):
        hx, hy = self.half
        return np.pi * hx * hy if self.kind == "disc" else 4.0 * hx * hy


@dataclass(frozen=True)
class Shape:
    parts: tuple

    @classmethod
    def disc(cls, rx, ry=None):
        return cls((Part("disc", (rx, rx if ry is None else ry)),))

    @classmethod
    def rect(cls, hx, hy):
        return cls((Part("rect", (hx, hy)),))

    @property
    def area(self):
        return sum(p.area for p in self.parts)

    @property
    def radius(self):
        """Largest distance from the pose to any point of the shape."""
        r = 0.0
        for p in self.parts:
            ox, oy = p.offset
            hx, hy = p.half
            r = max(r, np.hypot(abs(ox) + hx, abs(oy) + hy))
        return r

    def contains(self, local):
        """Whether pose-relative points (n x 2) lie in the shape."""
        local = np.atleast_2d(local)
        hit = np.zeros(local.shape[0], dtype=bool)
        for p in self.parts:
            q = local - np.asarray(p.offset)
            hx, hy = p.half
            if p.kind == "disc":
                hit |= (q[:, 0] / hx) ** 2 + (q[:, 1] / hy) ** 2 <= 1.0
            else:
                hit |= (np.abs(q[:, 0]) <= hx) & (np.abs(q[:, 1]) <= hy)
        return hit


def sample_object_cloud(shape, center, n, gen):
    """``n`` points uniform over the shape's area (boundary included), placed at ``center``."""
    if n < 1:
        raise ValueError("need at least one point")
    areas = np.array([p.area for p in shape.parts])
    if not np.all(areas > 0):
        raise ValueError("degenerate shape: zero area")
    which = gen.choice(len(shape.parts), size=n, p=areas / areas.sum())
    u = gen.random((n, 2))
    pts = np.empty((n, 2))
    for i, p in enumerate(shape.parts):
        sel = which == i
        hx, hy = p.half
        if p.kind == "disc":
            r = np.sqrt(u[sel, 0])
            th = 2 * np.pi * u[sel, 1]
            local = np.stack([hx * r * np.cos(th), hy * r * np.sin(th)], axis=1)
        else:
            local = (2 * u[sel] - 1) * np.array([hx, hy])
        pts[sel] = local + np.asarray(p.offset)
    return pts + np.asarray(center, dtype=np.float64)


def farthest_point_sample(cloud, m, start=0):
    return kernels.farthest_point_sample(cloud, m, start)


def centroid_start(cloud):
    """Index of the point nearest the cloud mean (lowest index on ties)."""
    d = np.sum((cloud - cloud.mean(axis=0)) ** 2, axis=1)
    return int(np.argmin(d))


def downsample(cloud, m=CLOUD_POINTS):
    """FPS to ``m`` points starting from the centre-most point; returns the points."""
    cloud = np.asarray(cloud, dtype=np.float64)
    if cloud.shape[0] <= m:
        idx = np.arange(cloud.shape[0])
        if cloud.shape[0] < m:
            idx = np.resize(idx, m)  # repeat points; max pooling is unaffected
        return cloud[idx]
    return cloud[farthest_point_sample(cloud, m, centroid_start(cloud))]


def gripper_template(m=CLOUD_POINTS, radius=0.015):
    """Fixed gripper cloud relative to the gripper position (sunflower pattern)."""
    i = np.arange(m) + 0.5
    r = radius * np.sqrt(i / m)
    th = i * np.pi * (3.0 - np.sqrt(5.0))
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)


class CloudEncoder:
    """Per-point MLP (d -> 64 -> 128, ELU), max pool over points, linear to 64."""

    def __init__(self, params, gen, prefix="cloud", d=2):
        self.prefix = prefix
        sizes = (d,) + HIDDEN
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            params.add(f"{prefix}.w{i}", gen.normal(0.0, np.sqrt(1.0 / a), (a, b)))
            params.add(f"{prefix}.b{i}", np.zeros(b))
        params.add(f"{prefix}.proj_w", gen.normal(0.0, np.sqrt(1.0 / HIDDEN[-1]), (HIDDEN[-1], D_PC)))
        params.add(f"{prefix}.proj_b", np.zeros(D_PC))
        self.params = params

    def __call__(self, clouds):
        """Embed a batch of clouds (B x n x d, or n x d) to B x 64 (or 64)."""
        p = self.params
        clouds = nx.as_tensor(clouds)
        single = clouds.data.ndim == 2
        if single:
            clouds = nx.reshape(clouds, (1,) + clouds.shape)
        h = clouds
        for i in range(len(HIDDEN)):
            h = nx.elu(h @ p[f"{self.prefix}.w{i}"] + p[f"{self.prefix}.b{i}"])
        out = nx.max_pool(h) @ p[f"{self.prefix}.proj_w"] + p[f"{self.prefix}.proj_b"]
        return out[0] if single else out


def encode_cloud(cloud, encoder):
    return encoder(cloud)
