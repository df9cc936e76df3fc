"""
Volume rendering against a closed form
======================================

A homogeneous slab of density sigma0 between depths a and b, seen along
the z axis, has exact color (1 - T) c + T bg with T = exp(-sigma0 (b - a)).
The quadrature converges to it as the number of samples grows.
"""

import math

import numpy as np

from augrf.render import QuadratureConfig, Ray, render_ray

sigma0, a, b = 6.0, 0.3037, 0.6571
color = np.array([0.2, 0.5, 0.9])


def slab(points, dirs, rows, ps):
    z = points[..., 2]
    return np.where((z >= a) & (z <= b), sigma0, 0.0), np.broadcast_to(color, points.shape)


T = math.exp(-sigma0 * (b - a))
exact = (1 - T) * color + T
ray = Ray(np.zeros(3), np.array([0.0, 0.0, 1.0]), 0.0, 1.0)

print(" samples   max channel error")
for s in (16, 32, 64, 128, 256, 512, 1024, 2048):
    res = render_ray(slab, ray, quad=QuadratureConfig(s))
    print(f"{s:8d}   {np.abs(res.color - exact).max():.3e}")

# Transmittance along the ray never increases
res = render_ray(slab, ray, quad=QuadratureConfig(16))
print("T:", np.round(res.transmittance, 3))
