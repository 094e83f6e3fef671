"""Spatial symmetry statistics and image canonicalization.

Each square image gets four statistics: the intensity-weighted center of
mass (h, v) in 1-based pixel coordinates (h horizontal/column, v
vertical/row), the weighted mean radius r of pixels around that center,
and the weighted mean angle phi of their polar angles.  Canonicalization
re-indexes pixels into a translated, un-scaled, un-rotated frame of
half-width M: each source pixel's centered offset is rotated by -phi,
scaled by C/r, rounded half-away-from-zero, and shifted into the
(2M+1) x (2M+1) target.  Colliding sources accumulate by summation, so
total mass is preserved on the mapped support; targets without a preimage
stay zero.  The inverse map pulls canonical values back through the same
index table.

The statistics can also populate latent coordinates: they become the means
of an independent Laplacian block whose free scale parameters play the
role of inverted momenta.
"""

from dataclasses import dataclass

import numpy as np

from .expfam import Laplacian


class DegenerateImageError(ValueError):
    """All-zero image or below-minimum scale."""


@dataclass(frozen=True)
class SymmetryStats:
    h: float      # horizontal centroid, 1-based pixels in [0, sqrt(N)]
    v: float      # vertical centroid
    r: float      # weighted mean radius, in (0, sqrt(2N)]
    phi: float    # weighted mean angle, in (-pi, pi]

    def as_vector(self):
        return np.array([self.h, self.v, self.r, self.phi])


def _validate(image):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ValueError("expected a square image")
    if np.any(image < 0):
        raise ValueError("pixel intensities must be non-negative")
    return image


def _coordinate_grids(n_side):
    # h runs over columns, v over rows, both 1-based
    v, h = np.mgrid[1:n_side + 1, 1:n_side + 1]
    return h.astype(np.float64), v.astype(np.float64)


def center_of_mass(image):
    """Intensity-weighted centroid (h, v) of a square image."""
    image = _validate(image)
    total = image.sum()
    if total <= 0:
        raise DegenerateImageError("centroid of an all-zero image is undefined")
    hgrid, vgrid = _coordinate_grids(image.shape[0])
    return float((image * hgrid).sum() / total), float((image * vgrid).sum() / total)


def scale_angle(image, h, v):
    """Weighted polar moments (r, phi) about the centroid (h, v)."""
    image = _validate(image)
    total = image.sum()
    if total <= 0:
        raise DegenerateImageError("scale of an all-zero image is undefined")
    hgrid, vgrid = _coordinate_grids(image.shape[0])
    dh, dv = hgrid - h, vgrid - v
    radius = np.sqrt(dh * dh + dv * dv)
    angle = np.arctan2(dv, dh)
    r = float((image * radius).sum() / total)
    if r <= 0:
        raise DegenerateImageError("all mass at the centroid: scale 0 rejected")
    phi = float((image * angle).sum() / total)
    return r, phi


def symmetry_stats(image):
    h, v = center_of_mass(image)
    r, phi = scale_angle(image, h, v)
    return SymmetryStats(h, v, r, phi)


def batch_symmetry_stats(images):
    """Per-observation stats for a [P x N] batch of flattened square images."""
    images = np.asarray(images, dtype=np.float64)
    n_side = int(round(np.sqrt(images.shape[1])))
    return [symmetry_stats(row.reshape(n_side, n_side)) for row in images]


def default_constants(n_side):
    """(C, M, r_min) defaults: C = sqrt(N)/2, half-width M with 2M+1 >= sqrt(N)."""
    return n_side / 2.0, n_side // 2, 2.0


def _round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class CanonicalMap:
    """Index table of the canonical re-indexing for one observation.

    ``source``/``target`` are paired 0-based flat indices into the
    n_side^2 image and the (2M+1)^2 canonical frame.  Sources whose image
    falls outside the frame are dropped; the table depends only on
    (stats, C, M, n_side).
    """
    source_size: int        # sqrt(N)
    half_width: int         # M
    scale_constant: float   # C
    source: np.ndarray
    target: np.ndarray

    @property
    def target_side(self):
        return 2 * self.half_width + 1


def canonical_index_map(stats, scale_constant, half_width, n_side, r_min=2.0):
    if stats.r < r_min:
        raise DegenerateImageError(
            f"scale {stats.r:.3f} below the lower bound {r_min}")
    hgrid, vgrid = _coordinate_grids(n_side)
    dh, dv = hgrid - stats.h, vgrid - stats.v
    cos, sin = np.cos(stats.phi), np.sin(stats.phi)
    # rotate the row offsets by -phi (proper rotation), then un-scale
    factor = scale_constant / stats.r
    th = _round_half_away(factor * (dh * cos + dv * sin))
    tv = _round_half_away(factor * (-dh * sin + dv * cos))
    inside = (np.abs(th) <= half_width) & (np.abs(tv) <= half_width)
    side = 2 * half_width + 1
    # shift to 1-based target coordinates, then linear index
    lin = (th + half_width + 1) + (tv + half_width) * side
    src = np.flatnonzero(inside.ravel())
    dst = (lin.ravel()[src] - 1).astype(np.intp)
    return CanonicalMap(n_side, half_width, scale_constant, src, dst)


def canonicalize(image, stats, scale_constant, half_width, r_min=2.0):
    """Remap an image into the translated/un-scaled/un-rotated frame.

    Output is the flat (2M+1)^2 canonical vector; colliding source pixels
    sum into their shared target cell, and cells with no preimage stay zero.
    """
    image = _validate(image)
    table = canonical_index_map(stats, scale_constant, half_width,
                                image.shape[0], r_min)
    out = np.zeros(table.target_side ** 2)
    np.add.at(out, table.target, image.ravel()[table.source])
    return out


def inverse_canonicalize(canonical, stats, scale_constant, half_width,
                         n_side, r_min=2.0):
    """Pull a canonical vector back to the original frame via the index table.

    A target cell with several preimages (sources that collided under the
    forward map) is split equally among them, so the pull-back conserves the
    mass the forward map accumulated.  Source cells outside the map's domain
    and targets with no preimage contribute zero.
    """
    canonical = np.asarray(canonical, dtype=np.float64).ravel()
    table = canonical_index_map(stats, scale_constant, half_width,
                                n_side, r_min)
    if canonical.size != table.target_side ** 2:
        raise ValueError(
            f"canonical vector must have {table.target_side ** 2} entries")
    counts = np.zeros(table.target_side ** 2)
    np.add.at(counts, table.target, 1.0)
    out = np.zeros(n_side * n_side)
    out[table.source] = canonical[table.target] / counts[table.target]
    return out.reshape(n_side, n_side)


def symmetry_latent_density(stats, scales):
    """Laplacian latent block with means (h, v, r, phi) and free scales.

    ``scales`` are the unit-scale sigmas of the four coordinates (so the
    actual Laplacian scale is sigma * sqrt(0.5)); they plug straight into
    the exponential-family generative error.  Their inverses are the scaled
    momenta paired with each symmetry.
    """
    scales = np.asarray(scales, dtype=np.float64)
    if scales.shape != (4,) or np.any(scales <= 0):
        raise ValueError("need four positive scale parameters")
    return Laplacian.from_unit_scale(stats.as_vector(), scales)


def momenta(density):
    """Scaled momenta of a Laplacian symmetry block: 1 / (2 b) per coordinate."""
    return 1.0 / (2.0 * density.b)
