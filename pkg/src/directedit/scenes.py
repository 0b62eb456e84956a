"""Synthetic videos with exact motion, object masks and the condition registry.

A manifest is a JSON object::

    {"canvas": {"t": 8, "h": 32, "w": 32, "c": 1},
     "background": {"kind": "constant", "value": [0.2]},
     "objects": [{"shape": "disk", "size": 4, "position": [10, 8],
                  "appearance": [0.6], "velocity": [0, 1]}],
     "conditions": {"gray_disk": {"appearance": [0.6], "sigma": null},
                    "bright_square": {"shape": "rectangle", "size": [7, 7],
                                      "appearance": [0.9], "sigma": null}},
     "null": {"sigma": null},
     "exact": true}

Positions are object centers ``[y, x]``; velocities are pixels per frame.
Background kinds: ``constant`` (``value``), ``ramp`` (``axis``, ``low``,
``high``) and ``noise`` (``cell``, ``low``, ``high``; seeded value noise).
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    DTYPE,
    NULL_ID,
    STREAM_SCENE,
    Condition,
    InvalidArgument,
    NotFound,
    SeedSpec,
    rng,
)
from .fields import AnalyticField, Delta, IsotropicGaussian
from .metrics import warp_frame

SHAPES = ("disk", "rectangle")
BACKGROUNDS = ("constant", "ramp", "noise")


class ManifestError(InvalidArgument):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class ObjectSpec:
    shape: str
    size: tuple  # (radius,) for disks, (h, w) for rectangles
    position: tuple
    appearance: tuple
    velocity: tuple

    def center(self, t: int) -> tuple:
        return (self.position[0] + t * self.velocity[0], self.position[1] + t * self.velocity[1])

    def support(self, t: int, h: int, w: int) -> np.ndarray:
        cy, cx = self.center(t)
        yy, xx = np.meshgrid(np.arange(h, dtype=DTYPE), np.arange(w, dtype=DTYPE), indexing="ij")
        if self.shape == "disk":
            r = self.size[0]
            return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        sh, sw = self.size
        top = cy - (sh - 1) / 2
        left = cx - (sw - 1) / 2
        return (yy >= top) & (yy <= top + sh - 1) & (xx >= left) & (xx <= left + sw - 1)

    def extent(self, t: int) -> tuple:
        """Inclusive bounding box ``(y0, y1, x0, x1)`` at frame t."""
        cy, cx = self.center(t)
        if self.shape == "disk":
            r = self.size[0]
            return cy - r, cy + r, cx - r, cx + r
        sh, sw = self.size
        return cy - (sh - 1) / 2, cy + (sh - 1) / 2, cx - (sw - 1) / 2, cx + (sw - 1) / 2


@dataclass(frozen=True)
class ConditionSpec:
    appearance: Optional[tuple] = None
    shape: Optional[str] = None
    size: Optional[tuple] = None
    sigma: Optional[float] = None
    object: int = 0
    keyword: str = ""


@dataclass(frozen=True)
class SceneSpec:
    canvas: tuple  # (T, H, W, C)
    background: dict
    objects: tuple
    conditions: dict = field(default_factory=dict)
    null_sigma: Optional[float] = None
    exact: bool = True
    seed: int = 0


@dataclass
class SceneBundle:
    video: np.ndarray
    flow: np.ndarray
    object_masks: list
    manifest: dict
    flow_exact: bool


# -- manifest parsing ---------------------------------------------------------

def _keys(obj, path, required, optional=()):
    if not isinstance(obj, dict):
        raise ManifestError(path, "expected an object")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise ManifestError(path, f"unknown keys {sorted(unknown)}")
    for k in required:
        if k not in obj:
            raise ManifestError(f"{path}.{k}", "missing")


def _num(v, path, *, integer=False, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ManifestError(path, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ManifestError(path, f"expected an integer, got {v!r}")
    if not np.isfinite(v) or (positive and v <= 0) or (nonneg and v < 0):
        raise ManifestError(path, f"out of range: {v!r}")
    return int(v) if integer else float(v)


def _vec(v, path, n, **kw):
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise ManifestError(path, f"expected a list of {n} numbers, got {v!r}")
    return tuple(_num(x, f"{path}[{i}]", **kw) for i, x in enumerate(v))


def _size(shape, v, path):
    if shape == "disk":
        if isinstance(v, (list, tuple)):
            return _vec(v, path, 1, positive=True)
        return (_num(v, path, positive=True),)
    return _vec(v, path, 2, integer=True, positive=True)


def parse_manifest(doc: dict) -> SceneSpec:
    _keys(doc, "manifest", ("canvas", "background", "objects"), ("conditions", "null", "exact", "seed"))
    _keys(doc["canvas"], "canvas", ("t", "h", "w", "c"))
    canvas = tuple(_num(doc["canvas"][k], f"canvas.{k}", integer=True, positive=True) for k in "thwc")
    c = canvas[3]
    exact = doc.get("exact", True)
    if not isinstance(exact, bool):
        raise ManifestError("exact", "expected true or false")

    bg = doc["background"]
    if not isinstance(bg, dict) or bg.get("kind") not in BACKGROUNDS:
        raise ManifestError("background.kind", f"must be one of {BACKGROUNDS}")
    if bg["kind"] == "constant":
        _keys(bg, "background", ("kind", "value"))
        background = {"kind": "constant", "value": _vec(bg["value"], "background.value", c)}
    elif bg["kind"] == "ramp":
        _keys(bg, "background", ("kind", "axis", "low", "high"))
        if bg["axis"] not in ("x", "y"):
            raise ManifestError("background.axis", "must be 'x' or 'y'")
        background = {"kind": "ramp", "axis": bg["axis"], "low": _vec(bg["low"], "background.low", c),
                      "high": _vec(bg["high"], "background.high", c)}
    else:
        _keys(bg, "background", ("kind", "cell", "low", "high"))
        background = {"kind": "noise", "cell": _num(bg["cell"], "background.cell", integer=True, positive=True),
                      "low": _vec(bg["low"], "background.low", c), "high": _vec(bg["high"], "background.high", c)}

    if not isinstance(doc["objects"], list):
        raise ManifestError("objects", "expected a list")
    objects = []
    for i, o in enumerate(doc["objects"]):
        p = f"objects[{i}]"
        _keys(o, p, ("shape", "size", "position", "appearance", "velocity"), ("antialias",))
        if o.get("antialias", False) is not False:
            raise ManifestError(f"{p}.antialias", "anti-aliased rendering is not supported")
        if o["shape"] not in SHAPES:
            raise ManifestError(f"{p}.shape", f"must be one of {SHAPES}")
        integer = exact
        objects.append(ObjectSpec(
            o["shape"], _size(o["shape"], o["size"], f"{p}.size"),
            _vec(o["position"], f"{p}.position", 2, integer=integer),
            _vec(o["appearance"], f"{p}.appearance", c),
            _vec(o["velocity"], f"{p}.velocity", 2, integer=integer),
        ))

    conditions = {}
    for cid, entry in (doc.get("conditions") or {}).items():
        p = f"conditions.{cid}"
        if cid == NULL_ID:
            raise ManifestError(p, "the null condition id is reserved; configure it under 'null'")
        _keys(entry, p, (), ("appearance", "shape", "size", "sigma", "object", "keyword"))
        obj = _num(entry.get("object", 0), f"{p}.object", integer=True, nonneg=True)
        if obj >= len(objects):
            raise ManifestError(f"{p}.object", f"no object with index {obj}")
        shape = entry.get("shape")
        if shape is not None and shape not in SHAPES:
            raise ManifestError(f"{p}.shape", f"must be one of {SHAPES}")
        size = entry.get("size")
        if size is not None:
            size = _size(shape or objects[obj].shape, size, f"{p}.size")
        elif shape is not None and shape != objects[obj].shape:
            raise ManifestError(f"{p}.size", "required when the shape changes")
        appearance = entry.get("appearance")
        if appearance is not None:
            appearance = _vec(appearance, f"{p}.appearance", c)
        sigma = entry.get("sigma")
        if sigma is not None:
            sigma = _num(sigma, f"{p}.sigma", positive=True)
        keyword = entry.get("keyword", shape or objects[obj].shape)
        conditions[cid] = ConditionSpec(appearance, shape, size, sigma, obj, str(keyword))

    null = doc.get("null") or {}
    _keys(null, "null", (), ("sigma",))
    null_sigma = null.get("sigma")
    if null_sigma is not None:
        null_sigma = _num(null_sigma, "null.sigma", positive=True)
    seed = _num(doc.get("seed", 0), "seed", integer=True, nonneg=True)

    spec = SceneSpec(canvas, background, tuple(objects), conditions, null_sigma, exact, seed)
    _check_bounds(spec.objects, canvas, "objects")
    for cid in conditions:
        _check_bounds(_condition_objects(spec, cid), canvas, f"conditions.{cid}")
    return spec


def _check_bounds(objects, canvas, path):
    T, H, W, _ = canvas
    for i, o in enumerate(objects):
        for t in range(T):
            y0, y1, x0, x1 = o.extent(t)
            if y0 < 0 or x0 < 0 or y1 > H - 1 or x1 > W - 1:
                raise ManifestError(f"{path}[{i}]", f"object {i} ({o.shape}) leaves the canvas at frame {t}")


def _condition_objects(spec: SceneSpec, cid: str) -> tuple:
    entry = spec.conditions[cid]
    objects = list(spec.objects)
    o = objects[entry.object]
    objects[entry.object] = ObjectSpec(
        entry.shape or o.shape,
        entry.size or o.size,
        o.position,
        entry.appearance or o.appearance,
        o.velocity,
    )
    return tuple(objects)


# -- rendering ----------------------------------------------------------------

def render_background(spec: SceneSpec, seed: SeedSpec) -> np.ndarray:
    _, H, W, C = spec.canvas
    bg = spec.background
    if bg["kind"] == "constant":
        return np.broadcast_to(np.array(bg["value"], dtype=DTYPE), (H, W, C)).copy()
    low = np.array(bg["low"], dtype=DTYPE)
    high = np.array(bg["high"], dtype=DTYPE)
    if bg["kind"] == "ramp":
        n = W if bg["axis"] == "x" else H
        frac = np.arange(n, dtype=DTYPE) / max(n - 1, 1)
        frac = frac[None, :, None] if bg["axis"] == "x" else frac[:, None, None]
        return np.broadcast_to(low + frac * (high - low), (H, W, C)).copy()
    cell = bg["cell"]
    gh, gw = H // cell + 2, W // cell + 2
    lattice = rng(seed.at(stream=STREAM_SCENE)).random((gh, gw, C))
    y = np.arange(H, dtype=DTYPE) / cell
    x = np.arange(W, dtype=DTYPE) / cell
    y0, x0 = np.floor(y).astype(int), np.floor(x).astype(int)
    fy = (y - y0)[:, None, None]
    fx = (x - x0)[None, :, None]
    v = ((1 - fy) * (1 - fx) * lattice[y0][:, x0] + (1 - fy) * fx * lattice[y0][:, x0 + 1]
         + fy * (1 - fx) * lattice[y0 + 1][:, x0] + fy * fx * lattice[y0 + 1][:, x0 + 1])
    return low + v * (high - low)


def _paint(spec: SceneSpec, objects, background) -> tuple:
    T, H, W, C = spec.canvas
    video = np.empty((T, H, W, C), dtype=DTYPE)
    owner = np.full((T, H, W), -1, dtype=int)
    for t in range(T):
        frame = background.copy()
        for i, o in enumerate(objects):
            sup = o.support(t, H, W)
            frame[sup] = o.appearance
            owner[t][sup] = i
        video[t] = frame
    return video, owner


def _ground_truth_flow(objects, owner, video, background) -> np.ndarray:
    """Backward flow on frame t+1's grid pointing to its origin in frame t.

    Object pixels move with their object. Newly uncovered background points to
    the nearest background pixel visible in frame t with the same value, which
    is exact for backgrounds constant along the search direction.
    """
    T, H, W, _ = video.shape
    flow = np.zeros((T - 1, H, W, 2), dtype=DTYPE)
    for t in range(T - 1):
        for i, o in enumerate(objects):
            sel = owner[t + 1] == i
            flow[t][sel] = (-o.velocity[0], -o.velocity[1])
        uncovered = (owner[t + 1] < 0) & (owner[t] >= 0)
        if not uncovered.any():
            continue
        vis_y, vis_x = np.nonzero(owner[t] < 0)
        if vis_y.size == 0:
            continue
        vis_vals = background[vis_y, vis_x]
        for py, px in zip(*np.nonzero(uncovered)):
            d2 = (vis_y - py) ** 2 + (vis_x - px) ** 2
            same = np.all(vis_vals == background[py, px], axis=-1)
            if same.any():
                d2 = np.where(same, d2, np.iinfo(np.int64).max)
            k = int(np.argmin(d2))
            flow[t, py, px] = (vis_y[k] - py, vis_x[k] - px)
    return flow


def render_scene(spec: SceneSpec, seed: Optional[SeedSpec] = None, manifest: Optional[dict] = None) -> SceneBundle:
    seed = seed or SeedSpec(spec.seed)
    _check_bounds(spec.objects, spec.canvas, "objects")
    background = render_background(spec, seed)
    video, owner = _paint(spec, spec.objects, background)
    masks = [(owner == i).astype(DTYPE) for i in range(len(spec.objects))]
    T = spec.canvas[0]
    if T > 1:
        flow = _ground_truth_flow(spec.objects, owner, video, background)
        exact = all(np.array_equal(warp_frame(video[t], flow[t]), video[t + 1]) for t in range(T - 1))
    else:
        flow = np.zeros((0,) + spec.canvas[1:3] + (2,), dtype=DTYPE)
        exact = True
    return SceneBundle(video, flow, masks, copy.deepcopy(manifest) if manifest else {}, exact)


def render_condition(spec: SceneSpec, cid: str, seed: Optional[SeedSpec] = None) -> np.ndarray:
    """The scene re-rendered with one condition's appearance; ``∅`` drops all objects."""
    seed = seed or SeedSpec(spec.seed)
    background = render_background(spec, seed)
    if cid == NULL_ID:
        objects = ()
    elif cid in spec.conditions:
        objects = _condition_objects(spec, cid)
    else:
        raise NotFound(f"unknown condition {cid!r}")
    return _paint(spec, objects, background)[0]


def condition_target(registry: SceneSpec, condition: Condition, scene: Optional[SceneBundle] = None,
                     seed: Optional[SeedSpec] = None):
    """Data distribution bound to ``condition``: Delta, or Gaussian when a sigma is set."""
    cid = condition.id
    if cid != NULL_ID and cid not in registry.conditions:
        raise NotFound(f"unknown condition {cid!r}")
    center = render_condition(registry, cid, seed)
    if scene is not None and center.shape != scene.video.shape:
        raise InvalidArgument(f"condition render {center.shape} does not match scene {scene.video.shape}")
    sigma = registry.null_sigma if cid == NULL_ID else registry.conditions[cid].sigma
    return Delta(center) if sigma is None else IsotropicGaussian(center, sigma)


def make_condition(spec: SceneSpec, cid: str) -> Condition:
    if cid == NULL_ID:
        return Condition(NULL_ID, NULL_ID, "")
    if cid not in spec.conditions:
        raise NotFound(f"unknown condition {cid!r}")
    return Condition(cid, cid, spec.conditions[cid].keyword)


def build_field(spec: SceneSpec, seed: Optional[SeedSpec] = None) -> AnalyticField:
    registry = {cid: condition_target(spec, Condition(cid), seed=seed) for cid in spec.conditions}
    registry[NULL_ID] = condition_target(spec, Condition(NULL_ID), seed=seed)
    return AnalyticField(registry)


def relevance_maps(spec: SceneSpec) -> dict:
    """Ground-truth attention per condition: the support of its edited object."""
    T, H, W, _ = spec.canvas
    out = {}
    for cid, entry in spec.conditions.items():
        o = _condition_objects(spec, cid)[entry.object]
        out[cid] = np.stack([o.support(t, H, W) for t in range(T)]).astype(DTYPE)
    return out
