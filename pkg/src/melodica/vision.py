"""Color-based instrument localization from synthetic camera views.

The instrument's flat top face is rendered through a pinhole camera looking
along its normal, so a pose hypothesis (position in the camera frame plus
in-plane yaw) projects the body outline to a quadrilateral.  Pose estimation
scores hypotheses by how well that projected outline matches the contour
observed in the image, then refines the best grid cell by coordinate descent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .geometry import InstrumentPlacement
from .instrument import XylophoneModel

GRID_POS_SPAN_CM = 10.0
GRID_POS_STEP_CM = 1.0
GRID_YAW_SPAN_RAD = math.radians(15.0)
GRID_YAW_STEP_RAD = math.radians(3.0)
REFINE_POS_CM = 0.1  # 1 mm
REFINE_YAW_RAD = math.radians(0.5)
MIN_BLOB_PX = 25


class NoInstrument(ValueError):
    pass


class EmptyMask(ValueError):
    pass


class MalformedImage(ValueError):
    pass


@dataclass(frozen=True)
class CameraModel:
    image_size: tuple[int, int] = (640, 480)  # (width, height)
    diag_fov_deg: float = 73.0

    @property
    def focal_px(self) -> float:
        w, h = self.image_size
        diag = math.hypot(w, h)
        return diag / (2.0 * math.tan(math.radians(self.diag_fov_deg) / 2.0))

    @property
    def principal_point(self) -> tuple[float, float]:
        return (self.image_size[0] / 2.0, self.image_size[1] / 2.0)

    def project(self, points_cam: np.ndarray) -> np.ndarray:
        """Pinhole projection of Nx3 camera-frame points to Nx2 pixels."""
        pts = np.asarray(points_cam, dtype=float)
        cx, cy = self.principal_point
        z = pts[..., 2]
        return np.stack(
            [self.focal_px * pts[..., 0] / z + cx, self.focal_px * pts[..., 1] / z + cy],
            axis=-1,
        )


@dataclass(frozen=True)
class PoseHypothesis:
    """Instrument top-face center in the camera frame, with in-plane yaw."""

    x_cm: float
    y_cm: float
    z_cm: float
    yaw_rad: float = 0.0

    def __post_init__(self):
        if self.z_cm <= 0:
            raise ValueError("hypothesis must lie in front of the camera")

    def as_array(self) -> np.ndarray:
        return np.array([self.x_cm, self.y_cm, self.z_cm, self.yaw_rad])


@dataclass(frozen=True)
class HsvRange:
    hue_deg: tuple[float, float] = (200.0, 260.0)
    sat_min: float = 0.5
    val_min: float = 0.3


def rgb_to_hsv(image: np.ndarray) -> np.ndarray:
    """Vectorized RGB [0,255] -> (hue degrees, sat, val) float arrays."""
    rgb = image.astype(np.float64) / 255.0
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    val = maxc
    spread = maxc - minc
    sat = np.where(maxc > 0, spread / np.maximum(maxc, 1e-12), 0.0)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    safe = np.maximum(spread, 1e-12)
    hue = np.zeros_like(maxc)
    hue = np.where(maxc == r, (g - b) / safe % 6.0, hue)
    hue = np.where(maxc == g, (b - r) / safe + 2.0, hue)
    hue = np.where(maxc == b, (r - g) / safe + 4.0, hue)
    hue = np.where(spread > 0, hue * 60.0, 0.0)
    return np.stack([hue, sat, val], axis=-1)


# ---------------------------------------------------------------------------
# synthetic rendering


def _instrument_quads(model: XylophoneModel):
    """(corners in the u-v plane, color) for the body and each bar."""
    half_u = model.body_cm[0] / 2.0
    half_v = model.body_cm[1] / 2.0
    quads = [(_rect(0.0, 0.0, half_u, half_v), model.body_color_rgb)]
    for bar in model.bars:
        hu = bar.playable_area_cm[1] / 2.0
        hv = bar.playable_area_cm[0] / 2.0
        quads.append((_rect(bar.center_cm[0], bar.center_cm[1], hu, hv), bar.color_rgb))
    return quads


def _rect(cu: float, cv: float, hu: float, hv: float) -> np.ndarray:
    return np.array(
        [[cu - hu, cv - hv], [cu + hu, cv - hv], [cu + hu, cv + hv], [cu - hu, cv + hv]]
    )


def _pose_transform(pose: PoseHypothesis, uv: np.ndarray) -> np.ndarray:
    """Lift u-v plane points into the camera frame under the hypothesis."""
    c, s = math.cos(pose.yaw_rad), math.sin(pose.yaw_rad)
    x = c * uv[..., 0] - s * uv[..., 1] + pose.x_cm
    y = s * uv[..., 0] + c * uv[..., 1] + pose.y_cm
    z = np.full_like(x, pose.z_cm)
    return np.stack([x, y, z], axis=-1)


def project_outline(model: XylophoneModel, camera: CameraModel, pose: PoseHypothesis,
                    pad_px: float = 0.0) -> np.ndarray:
    """Projected 4-corner body outline (pixels) under the hypothesis.

    pad_px grows the outline by that many pixels on every side; raster
    contours of filled shapes run half a pixel inside the true boundary, so
    matching against them uses pad_px=0.5.
    """
    pad_cm = pad_px * pose.z_cm / camera.focal_px
    corners = _rect(0.0, 0.0, model.body_cm[0] / 2.0 + pad_cm, model.body_cm[1] / 2.0 + pad_cm)
    return camera.project(_pose_transform(pose, corners))


def render_synthetic(model: XylophoneModel, camera: CameraModel, pose: PoseHypothesis,
                     background: tuple[int, int, int] = (210, 210, 210)) -> np.ndarray:
    """Flat-shaded top view of the instrument over a uniform background."""
    w, h = camera.image_size
    image = np.empty((h, w, 3), dtype=np.uint8)
    image[:] = background
    for uv, color in _instrument_quads(model):
        poly = camera.project(_pose_transform(pose, uv))
        _fill_convex(image, poly, color)
    return image


def _fill_convex(image: np.ndarray, poly: np.ndarray, color) -> None:
    h, w = image.shape[:2]
    x0 = max(0, int(math.floor(poly[:, 0].min())))
    x1 = min(w - 1, int(math.ceil(poly[:, 0].max())))
    y0 = max(0, int(math.floor(poly[:, 1].min())))
    y1 = min(h - 1, int(math.ceil(poly[:, 1].max())))
    if x1 < x0 or y1 < y0:
        return
    xs = np.arange(x0, x1 + 1) + 0.5
    ys = np.arange(y0, y1 + 1) + 0.5
    gx, gy = np.meshgrid(xs, ys)
    inside = np.ones(gx.shape, dtype=bool)
    n = len(poly)
    # half-plane test; polygon winding handled by orienting edges consistently
    area = 0.0
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        area += a[0] * b[1] - b[0] * a[1]
    sign = 1.0 if area > 0 else -1.0
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        cross = (b[0] - a[0]) * (gy - a[1]) - (b[1] - a[1]) * (gx - a[0])
        inside &= sign * cross >= 0
    image[y0 : y1 + 1, x0 : x1 + 1][inside] = color


# ---------------------------------------------------------------------------
# masks and contours


def detect_blue_mask(image: np.ndarray, hsv_range: HsvRange = HsvRange()):
    """Threshold the reference-bar blue; returns (mask, centroid_xy, pixel_count).

    The centroid and count describe the largest connected component, which
    makes the detector ignore smaller blue distractors.
    """
    hsv = rgb_to_hsv(image)
    lo, hi = hsv_range.hue_deg
    mask = (
        (hsv[..., 0] >= lo)
        & (hsv[..., 0] <= hi)
        & (hsv[..., 1] >= hsv_range.sat_min)
        & (hsv[..., 2] >= hsv_range.val_min)
    )
    component = _largest_component(mask)
    count = int(component.sum())
    if count < MIN_BLOB_PX:
        raise NoInstrument(f"blue blob too small: {count} px")
    ys, xs = np.nonzero(component)
    centroid = (float(xs.mean()) + 0.5, float(ys.mean()) + 0.5)  # pixel centers
    return mask, centroid, count


def instrument_mask(image: np.ndarray, model: XylophoneModel, tol: int = 40) -> np.ndarray:
    """Union of per-color matches for every instrument color."""
    img = image.astype(np.int16)
    mask = np.zeros(image.shape[:2], dtype=bool)
    colors = [model.body_color_rgb] + [b.color_rgb for b in model.bars]
    for color in colors:
        diff = np.abs(img - np.asarray(color, dtype=np.int16)).max(axis=-1)
        mask |= diff <= tol
    return mask


def _largest_component(mask: np.ndarray) -> np.ndarray:
    labeled, n = ndimage.label(mask)
    if n == 0:
        return np.zeros_like(mask)
    sizes = ndimage.sum_labels(np.ones_like(labeled), labeled, index=np.arange(1, n + 1))
    return labeled == (int(np.argmax(sizes)) + 1)


_MOORE_OFFSETS = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]


def extract_contour(mask: np.ndarray) -> np.ndarray:
    """Outer boundary of the mask's largest component as Nx2 (x, y) pixels.

    Moore neighbor tracing starting from the top-left boundary pixel;
    deterministic for a given mask.
    """
    component = _largest_component(mask)
    if not component.any():
        raise EmptyMask("mask has no foreground pixels")
    rows, cols = np.nonzero(component)
    start = (int(rows[0]), int(cols[0]))
    padded = np.zeros((component.shape[0] + 2, component.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = component
    start = (start[0] + 1, start[1] + 1)

    contour = [start]
    # start is the top-left foreground pixel; pretend we arrived moving east
    # (from the background on its left) so the scan hugs the outer boundary
    prev_dir = 2
    current = start
    while True:
        found = False
        for k in range(8):
            d = (prev_dir + 5 + k) % 8  # backtrack then sweep clockwise
            nr = current[0] + _MOORE_OFFSETS[d][0]
            nc = current[1] + _MOORE_OFFSETS[d][1]
            if padded[nr, nc]:
                current = (nr, nc)
                prev_dir = d
                found = True
                break
        if not found:
            break  # isolated pixel
        if current == start and len(contour) > 2:
            break
        contour.append(current)
        if len(contour) > 4 * padded.size:
            raise RuntimeError("contour tracing runaway")
    pts = np.array(contour, dtype=float)
    # pixel-center coordinates: column j spans x in [j, j+1)
    return np.stack([pts[:, 1] - 1 + 0.5, pts[:, 0] - 1 + 0.5], axis=-1)  # (x, y)


def densify_polygon(poly: np.ndarray, spacing_px: float = 1.0, closed: bool = True) -> np.ndarray:
    """Resample polygon edges so consecutive points sit within spacing_px."""
    pts = np.asarray(poly, dtype=float)
    if len(pts) == 1:
        return pts.copy()
    edges = list(range(len(pts) - 1)) + ([len(pts) - 1] if closed else [])
    out = []
    for i in edges:
        a = pts[i]
        b = pts[(i + 1) % len(pts)]
        steps = max(1, int(math.ceil(np.linalg.norm(b - a) / spacing_px)))
        for s in range(steps):
            out.append(a + (b - a) * (s / steps))
    if not closed:
        out.append(pts[-1])
    return np.array(out)


def hypothesis_likelihood(observed: np.ndarray, projected: np.ndarray) -> float:
    """1 / (1 + mean symmetric nearest-point distance) between two contours.

    Both polygons are densified to ~1 px spacing before matching, so a
    4-corner projected outline compares fairly against a pixel-chain contour.
    """
    if len(observed) == 0 or len(projected) == 0:
        raise ValueError("polygons must be nonempty")
    obs = densify_polygon(np.asarray(observed, dtype=float))
    proj = densify_polygon(np.asarray(projected, dtype=float))
    d_obs = cKDTree(proj).query(obs)[0].mean()
    d_proj = cKDTree(obs).query(proj)[0].mean()
    return 1.0 / (1.0 + 0.5 * (d_obs + d_proj))


# ---------------------------------------------------------------------------
# pose estimation


@dataclass(frozen=True)
class PoseSearchConfig:
    pos_span_cm: float = GRID_POS_SPAN_CM
    pos_step_cm: float = GRID_POS_STEP_CM
    yaw_span_rad: float = GRID_YAW_SPAN_RAD
    yaw_step_rad: float = GRID_YAW_STEP_RAD
    edge_points: int = 8  # projected points per quad edge in the grid pass
    chunk: int = 4096


def estimate_pose(image: np.ndarray, model: XylophoneModel, camera: CameraModel,
                  prior: PoseHypothesis, search: PoseSearchConfig = PoseSearchConfig()) -> PoseHypothesis:
    """Best pose by matching every color-region contour, not just the body.

    Using the bar edges alongside the body outline pins the depth: each region
    boundary lands at a different sub-pixel phase, so their errors average out
    instead of all dragging the scale one way.  A coarse grid around the prior
    scores the chamfer distance of projected contours against the observed
    edge map, then coordinate descent maximizes the symmetric contour
    likelihood down to 1 mm / 0.5 degree steps.
    """
    if instrument_mask(image, model).sum() < MIN_BLOB_PX:
        raise NoInstrument("instrument colors not found in image")
    observed = _observed_region_contours(image, model)
    if not observed:
        raise NoInstrument("no instrument color regions found")

    best = _coarse_grid_best(observed, image.shape, model, camera, prior, search)
    return _refine(observed, model, camera, best)


def _observed_region_contours(image: np.ndarray, model: XylophoneModel,
                              tol: int = 40) -> list[np.ndarray]:
    img = image.astype(np.int16)
    contours = []
    colors = [model.body_color_rgb] + [b.color_rgb for b in model.bars]
    for color in colors:
        mask = np.abs(img - np.asarray(color, dtype=np.int16)).max(axis=-1) <= tol
        if mask.sum() < MIN_BLOB_PX:
            continue
        contours.append(extract_contour(mask))
    return contours


def _scene_quads(model: XylophoneModel) -> tuple[np.ndarray, np.ndarray]:
    """Centers (q, 2) and half extents (q, 2) of body plus bar rectangles."""
    centers = [(0.0, 0.0)]
    halves = [(model.body_cm[0] / 2.0, model.body_cm[1] / 2.0)]
    for bar in model.bars:
        centers.append((bar.center_cm[0], bar.center_cm[1]))
        halves.append((bar.playable_area_cm[1] / 2.0, bar.playable_area_cm[0] / 2.0))
    return np.array(centers), np.array(halves)


def _grid_axis(center: float, span: float, step: float) -> np.ndarray:
    n = int(round(span / step))
    return center + step * np.arange(-n, n + 1)


_CORNER_SIGNS = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)


def _coarse_grid_best(observed, image_shape, model, camera, prior, search) -> PoseHypothesis:
    xs = _grid_axis(prior.x_cm, search.pos_span_cm, search.pos_step_cm)
    ys = _grid_axis(prior.y_cm, search.pos_span_cm, search.pos_step_cm)
    zs = _grid_axis(prior.z_cm, search.pos_span_cm, search.pos_step_cm)
    zs = zs[zs > 1.0]
    yaws = _grid_axis(prior.yaw_rad, search.yaw_span_rad, search.yaw_step_rad)
    grid = np.stack(np.meshgrid(xs, ys, zs, yaws, indexing="ij"), axis=-1).reshape(-1, 4)

    # distance transform of the observed edge raster: distance from any pixel
    # to the nearest observed contour pixel
    h, w = image_shape[:2]
    raster = np.ones((h, w), dtype=bool)
    all_obs = np.concatenate(observed, axis=0)
    ij = np.round(all_obs[:, ::-1] - 0.5).astype(int)
    ij[:, 0] = np.clip(ij[:, 0], 0, h - 1)
    ij[:, 1] = np.clip(ij[:, 1], 0, w - 1)
    raster[ij[:, 0], ij[:, 1]] = False
    dist_map = ndimage.distance_transform_edt(raster).astype(np.float32)

    centers, halves = _scene_quads(model)
    q = len(centers)
    fr = (np.arange(search.edge_points) / search.edge_points).astype(np.float32)

    best_score = -1.0
    best_row = grid[0]
    cx, cy = camera.principal_point
    f = camera.focal_px
    for lo in range(0, len(grid), search.chunk):
        rows = grid[lo : lo + search.chunk].astype(np.float32)
        n = len(rows)
        c, s = np.cos(rows[:, 3]), np.sin(rows[:, 3])
        # raster contours sit half a pixel inside the true region boundary
        pad = 0.5 * rows[:, 2] / f
        hu = halves[None, :, 0] + pad[:, None]  # (n, q)
        hv = halves[None, :, 1] + pad[:, None]
        u = centers[None, :, None, 0] + _CORNER_SIGNS[None, None, :, 0] * hu[:, :, None]
        v = centers[None, :, None, 1] + _CORNER_SIGNS[None, None, :, 1] * hv[:, :, None]
        x = c[:, None, None] * u - s[:, None, None] * v + rows[:, 0, None, None]
        y = s[:, None, None] * u + c[:, None, None] * v + rows[:, 1, None, None]
        px = f * x / rows[:, 2, None, None] + cx  # (n, q, 4)
        py = f * y / rows[:, 2, None, None] + cy
        corners = np.stack([px, py], axis=-1).reshape(n, q * 4, 2)
        nxt = np.stack([px[:, :, [1, 2, 3, 0]], py[:, :, [1, 2, 3, 0]]], axis=-1).reshape(n, q * 4, 2)

        pts = corners[:, :, None, :] + (nxt - corners)[:, :, None, :] * fr[None, None, :, None]
        pts = pts.reshape(n, -1, 2)  # (n, q*4*edge_points, 2)

        pj = np.clip((pts[..., 1] - 0.5).round().astype(int), 0, h - 1)
        pi = np.clip((pts[..., 0] - 0.5).round().astype(int), 0, w - 1)
        score = 1.0 / (1.0 + dist_map[pj, pi].mean(axis=1))
        k = int(np.argmax(score))
        if score[k] > best_score:
            best_score = float(score[k])
            best_row = grid[lo + k]
    return PoseHypothesis(float(best_row[0]), float(best_row[1]), float(best_row[2]), float(best_row[3]))


def _projected_scene_contour(model, camera, pose: PoseHypothesis, pad_px: float = 0.5) -> np.ndarray:
    centers, halves = _scene_quads(model)
    pad_cm = pad_px * pose.z_cm / camera.focal_px
    pts = []
    for (cu, cv), (hu, hv) in zip(centers, halves):
        quad = camera.project(_pose_transform(pose, _rect(cu, cv, hu + pad_cm, hv + pad_cm)))
        pts.append(densify_polygon(quad))
    return np.concatenate(pts, axis=0)


_SCENE_MAX_OBS = 1500


def _scene_likelihood(observed: list[np.ndarray], model, camera, pose: PoseHypothesis) -> float:
    obs = np.concatenate(observed, axis=0)
    if len(obs) > _SCENE_MAX_OBS:
        obs = obs[:: len(obs) // _SCENE_MAX_OBS + 1]
    proj = _projected_scene_contour(model, camera, pose)
    d_obs = cKDTree(proj).query(obs)[0].mean()
    d_proj = cKDTree(obs).query(proj)[0].mean()
    return 1.0 / (1.0 + 0.5 * (d_obs + d_proj))


def _refine(observed: list[np.ndarray], model, camera, start: PoseHypothesis) -> PoseHypothesis:
    params = start.as_array()

    def score(arr) -> float:
        if arr[2] <= 1.0:
            return -1.0
        return _scene_likelihood(observed, model, camera, PoseHypothesis(arr[0], arr[1], arr[2], arr[3]))

    current = score(params)
    pos_step, yaw_step = 0.5, math.radians(1.5)
    while pos_step >= REFINE_POS_CM / 2 or yaw_step >= REFINE_YAW_RAD / 2:
        improved = False
        for idx in range(4):
            step = yaw_step if idx == 3 else pos_step
            for direction in (+1.0, -1.0):
                trial = params.copy()
                trial[idx] += direction * step
                val = score(trial)
                if val > current:
                    params, current = trial, val
                    improved = True
        if not improved:
            pos_step /= 2.0
            yaw_step /= 2.0
    return PoseHypothesis(params[0], params[1], params[2], params[3])


# ---------------------------------------------------------------------------
# micro adjustment


@dataclass(frozen=True)
class PoseDelta:
    """Rigid displacement of the instrument in the robot frame."""

    dx_cm: float = 0.0
    dy_cm: float = 0.0
    dz_cm: float = 0.0
    dyaw_rad: float = 0.0
    pivot_cm: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @classmethod
    def between(cls, nominal: InstrumentPlacement, estimated: InstrumentPlacement) -> "PoseDelta":
        return cls(
            dx_cm=estimated.x_cm - nominal.x_cm,
            dy_cm=estimated.y_cm - nominal.y_cm,
            dz_cm=estimated.z_cm - nominal.z_cm,
            dyaw_rad=estimated.yaw_rad - nominal.yaw_rad,
            pivot_cm=(nominal.x_cm, nominal.y_cm, nominal.z_cm),
        )


def micro_adjust(strike_target, pose_error: PoseDelta) -> np.ndarray:
    """Apply the rigid correction (rotation about the pivot, then translation)
    to a robot-frame strike target."""
    target = np.asarray(strike_target, dtype=float)
    pivot = np.asarray(pose_error.pivot_cm)
    c, s = math.cos(pose_error.dyaw_rad), math.sin(pose_error.dyaw_rad)
    rel = target - pivot
    rotated = np.array(
        [c * rel[0] - s * rel[1], s * rel[0] + c * rel[1], rel[2]]
    )
    return rotated + pivot + np.array([pose_error.dx_cm, pose_error.dy_cm, pose_error.dz_cm])


# ---------------------------------------------------------------------------
# camera mounting and PPM I/O


@dataclass(frozen=True)
class CameraExtrinsics:
    """Downward-looking head camera: cam x = robot +y, cam y = robot +x,
    cam z = robot -z (optical axis pointing straight down)."""

    center_cm: tuple[float, float, float] = (32.0, 0.0, 32.0)

    @property
    def rotation(self) -> np.ndarray:
        # columns: camera axes expressed in the robot frame
        return np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])

    def camera_pose_from_placement(self, placement: InstrumentPlacement) -> PoseHypothesis:
        rel = placement.origin - np.asarray(self.center_cm)
        cam = self.rotation.T @ rel
        return PoseHypothesis(cam[0], cam[1], cam[2], -placement.yaw_rad)

    def placement_from_camera_pose(self, pose: PoseHypothesis) -> InstrumentPlacement:
        robot = np.asarray(self.center_cm) + self.rotation @ np.array(
            [pose.x_cm, pose.y_cm, pose.z_cm]
        )
        return InstrumentPlacement(robot[0], robot[1], robot[2], -pose.yaw_rad)


def write_ppm(path, image: np.ndarray) -> None:
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.astype(np.uint8).tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise MalformedImage("not a binary PPM (P6) file")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise MalformedImage(f"bad PPM header fields: {fields}") from exc
    if maxval != 255:
        raise MalformedImage("only maxval 255 supported")
    if len(data) - pos < w * h * 3:
        raise MalformedImage("truncated pixel data")
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return pixels.reshape(h, w, 3).copy()
