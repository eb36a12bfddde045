"""Synthetic sample generation and persistence.

Samples are generated procedurally with a KNOWN warp: the ground-truth
on-body clothing is produced by deforming the flat clothing with a
deformation drawn from the generator spec, so the geometric matching
stage has a recoverable target.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import tps
from .tensor import (
    ArgumentError,
    FormatError,
    grid_sample,
    tensor_from_bytes,
    tensor_to_bytes,
)

N_KEYPOINTS = 18


@dataclass
class PersonInput:
    pose: np.ndarray        # (18,H,W) keypoint heatmaps
    body_shape: np.ndarray  # (1,H,W) blurred silhouette
    reserved: np.ndarray    # (3,H,W) identity regions (head)


@dataclass
class Sample:
    person: PersonInput
    clothing: np.ndarray        # (3,H,W)
    clothing_mask: np.ndarray   # (1,H,W)
    gt_warped: np.ndarray       # (3,H,W) clothing on body
    gt_onbody_mask: np.ndarray  # (1,H,W)
    gt_image: np.ndarray        # (3,H,W)
    keypoints: np.ndarray       # (18,3) normalized [x,y,visible]


@dataclass
class SynthSpec:
    seed: int
    image_size: tuple = (256, 192)
    torso_center: tuple = (0.5, 0.52)
    torso_axes: tuple = (0.24, 0.30)
    head_radius: float = 0.10
    arm_width: float = 0.05
    texture: str = "solid"
    color: tuple = (0.8, 0.2, 0.2)
    deformation: np.ndarray = field(default_factory=lambda: np.zeros(50))
    keypoints: np.ndarray = field(default_factory=lambda: np.zeros((N_KEYPOINTS, 3)))
    tps_k: int = 5


def random_spec(seed: int, image_size=(256, 192), tps_k: int = 5,
                max_offset: float = 0.12) -> SynthSpec:
    rng = np.random.default_rng(seed)
    cx = 0.5 + rng.uniform(-0.05, 0.05)
    cy = 0.52 + rng.uniform(-0.03, 0.03)
    axes = (rng.uniform(0.20, 0.27), rng.uniform(0.26, 0.33))
    kps = np.zeros((N_KEYPOINTS, 3))
    for i in range(N_KEYPOINTS):
        kps[i, 0] = np.clip(cx + rng.uniform(-1.2, 1.2) * axes[0], 0.02, 0.98)
        kps[i, 1] = np.clip(cy + rng.uniform(-1.4, 1.4) * axes[1], 0.02, 0.98)
        kps[i, 2] = 1.0 if rng.uniform() > 0.1 else 0.0
    return SynthSpec(
        seed=seed,
        image_size=tuple(image_size),
        torso_center=(cx, cy),
        torso_axes=axes,
        head_radius=rng.uniform(0.08, 0.11),
        arm_width=rng.uniform(0.04, 0.06),
        texture=str(rng.choice(["solid", "stripes", "checker"])),
        color=tuple(rng.uniform(0.25, 0.95, 3)),
        deformation=rng.uniform(-max_offset, max_offset, 2 * tps_k * tps_k),
        keypoints=kps,
        tps_k=tps_k,
    )


def pose_heatmaps(keypoints, height: int, width: int, sigma: float = 3.0) -> np.ndarray:
    """One Gaussian bump (peak 1) per visible keypoint; zeros when invisible."""
    keypoints = np.asarray(keypoints, dtype=np.float64)
    if keypoints.shape != (N_KEYPOINTS, 3):
        raise ArgumentError(f"expected {N_KEYPOINTS} [x,y,v] keypoints, got {keypoints.shape}")
    ys = np.arange(height)[:, None]
    xs = np.arange(width)[None, :]
    out = np.zeros((N_KEYPOINTS, height, width))
    for i, (x, y, vis) in enumerate(keypoints):
        if vis < 0.5:
            continue
        px = x * (width - 1)
        py = y * (height - 1)
        out[i] = np.exp(-((xs - px) ** 2 + (ys - py) ** 2) / (2.0 * sigma ** 2))
    return out


def box_blur5(img: np.ndarray) -> np.ndarray:
    """5x5 box filter with zero extension, per channel."""
    k = 5
    pad = k // 2
    out = np.zeros_like(img)
    for c in range(img.shape[0]):
        p = np.pad(img[c], pad)
        cs = p.cumsum(axis=0).cumsum(axis=1)
        cs = np.pad(cs, ((1, 0), (1, 0)))
        h, w = img[c].shape
        out[c] = (cs[k : k + h, k : k + w] - cs[:h, k : k + w]
                  - cs[k : k + h, :w] + cs[:h, :w]) / (k * k)
    return out


def _ellipse(u, v, cx, cy, ax, ay):
    return ((u - cx) / ax) ** 2 + ((v - cy) / ay) ** 2 <= 1.0


def _clothing_texture(spec: SynthSpec, rows, cols, height, width):
    img = np.zeros((3, height, width))
    r0, r1 = rows
    c0, c1 = cols
    color = np.asarray(spec.color)
    block = img[:, r0:r1, c0:c1]
    if spec.texture == "solid":
        block[:] = color[:, None, None]
    elif spec.texture == "stripes":
        yy = np.arange(r0, r1)[:, None] // 4 % 2
        block[:] = 0.2 + 0.8 * color[:, None, None] * np.broadcast_to(yy, (r1 - r0, c1 - c0))
        block[block < 0.2] = 0.2
    elif spec.texture == "checker":
        yy = np.arange(r0, r1)[:, None] // 4
        xx = np.arange(c0, c1)[None, :] // 4
        cell = (yy + xx) % 2
        block[:] = 0.2 + 0.8 * color[:, None, None] * cell
        block[block < 0.2] = 0.2
    else:
        raise ArgumentError(f"unknown clothing texture {spec.texture!r}")
    img[:, r0:r1, c0:c1] = np.clip(block, 0.0, 1.0)
    return img


def synth_sample(spec: SynthSpec) -> Sample:
    """Render one fully consistent synthetic person/clothing pair."""
    height, width = spec.image_size
    v, u = np.meshgrid(np.linspace(0, 1, height), np.linspace(0, 1, width),
                       indexing="ij")
    cx, cy = spec.torso_center
    ax, ay = spec.torso_axes

    torso = _ellipse(u, v, cx, cy, ax, ay)
    if not torso.any():
        raise ArgumentError(f"degenerate body geometry: empty torso for spec seed {spec.seed}")
    head_cy = cy - ay - spec.head_radius * 0.7
    head = _ellipse(u, v, cx, head_cy, spec.head_radius * 0.8, spec.head_radius)
    arm_l = _ellipse(u, v, cx - ax - spec.arm_width, cy, spec.arm_width, ay * 0.8)
    arm_r = _ellipse(u, v, cx + ax + spec.arm_width, cy, spec.arm_width, ay * 0.8)
    body = torso | head | arm_l | arm_r

    body_shape = box_blur5(body[None].astype(np.float64))

    reserved = np.zeros((3, height, width))
    hair = _ellipse(u, v, cx, head_cy - spec.head_radius * 0.4,
                    spec.head_radius * 0.85, spec.head_radius * 0.7)
    reserved[:, head] = np.array([0.85, 0.70, 0.60])[:, None]
    reserved[:, hair] = np.array([0.25, 0.15, 0.10])[:, None]

    rows = (int(0.30 * height), int(0.72 * height))
    cols = (int(0.26 * width), int(0.74 * width))
    clothing = _clothing_texture(spec, rows, cols, height, width)
    clothing_mask = np.zeros((1, height, width))
    clothing_mask[0, rows[0] : rows[1], cols[0] : cols[1]] = 1.0

    basis = tps.tps_basis(spec.tps_k, height, width)
    grid_star = tps.tps_grid(spec.deformation, basis)
    gt_warped = np.clip(grid_sample(clothing, grid_star), 0.0, 1.0)
    gt_onbody_mask = np.clip(grid_sample(clothing_mask, grid_star), 0.0, 1.0)

    rendered = np.zeros((3, height, width))
    rendered[:, body] = np.array([0.78, 0.64, 0.55])[:, None]
    rendered[:, head] = 0.0
    rendered += reserved
    rendered = np.clip(rendered, 0.0, 1.0)

    gt_image = np.clip(
        gt_onbody_mask * gt_warped + (1.0 - gt_onbody_mask) * rendered, 0.0, 1.0)

    pose = pose_heatmaps(spec.keypoints, height, width)
    return Sample(
        person=PersonInput(pose=pose, body_shape=body_shape, reserved=reserved),
        clothing=clothing,
        clothing_mask=clothing_mask,
        gt_warped=gt_warped,
        gt_onbody_mask=gt_onbody_mask,
        gt_image=gt_image,
        keypoints=np.asarray(spec.keypoints, dtype=np.float64),
    )


# --- tensor files -----------------------------------------------------------

def save_tensor(path, t: np.ndarray):
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(t))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    t, end = tensor_from_bytes(buf)
    if end != len(buf):
        raise FormatError(f"trailing {len(buf) - end} bytes after tensor at byte {end}")
    return t


# --- images -----------------------------------------------------------------

def save_image(path, t: np.ndarray):
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3 or t.shape[0] not in (1, 3):
        raise ArgumentError(f"image must be (1|3,H,W), got {t.shape}")
    if t.min() < 0.0 or t.max() > 1.0:
        raise ArgumentError(f"image values must lie in [0,1], got [{t.min()}, {t.max()}]")
    arr = np.round(t * 255.0).astype(np.uint8)
    if t.shape[0] == 1:
        img = Image.fromarray(arr[0], mode="L")
    else:
        img = Image.fromarray(arr.transpose(1, 2, 0), mode="RGB")
    img.save(path, format="PNG")


def load_image(path) -> np.ndarray:
    img = Image.open(path)
    if img.format != "PNG":
        raise FormatError(f"{path}: not a PNG file")
    if img.mode == "L":
        arr = np.asarray(img, dtype=np.float64)[None]
    elif img.mode == "RGB":
        arr = np.asarray(img, dtype=np.float64).transpose(2, 0, 1)
    else:
        raise FormatError(f"{path}: unsupported PNG mode {img.mode}")
    return arr / 255.0


# --- dataset directories ----------------------------------------------------

SAMPLE_FILES = {
    "body.png": "body_shape",
    "reserved.png": "reserved",
    "cloth.png": "clothing",
    "cloth_mask.png": "clothing_mask",
    "gt_warped.png": "gt_warped",
    "gt_onbody_mask.png": "gt_onbody_mask",
    "gt.png": "gt_image",
}


def save_sample(dirpath, sample: Sample):
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "pose.json", "w") as fh:
        json.dump([[float(x), float(y), float(v)] for x, y, v in sample.keypoints], fh)
    save_image(d / "body.png", sample.person.body_shape)
    save_image(d / "reserved.png", sample.person.reserved)
    save_image(d / "cloth.png", sample.clothing)
    save_image(d / "cloth_mask.png", sample.clothing_mask)
    save_image(d / "gt_warped.png", sample.gt_warped)
    save_image(d / "gt_onbody_mask.png", sample.gt_onbody_mask)
    save_image(d / "gt.png", sample.gt_image)


def load_sample(dirpath) -> Sample:
    d = Path(dirpath)
    with open(d / "pose.json") as fh:
        kps = np.asarray(json.load(fh), dtype=np.float64)
    if kps.shape != (N_KEYPOINTS, 3):
        raise FormatError(f"{d}/pose.json: expected {N_KEYPOINTS} [x,y,v] triples")
    imgs = {attr: load_image(d / name) for name, attr in SAMPLE_FILES.items()}
    h, w = imgs["body_shape"].shape[1:]
    return Sample(
        person=PersonInput(pose=pose_heatmaps(kps, h, w),
                           body_shape=imgs["body_shape"],
                           reserved=imgs["reserved"]),
        clothing=imgs["clothing"],
        clothing_mask=imgs["clothing_mask"],
        gt_warped=imgs["gt_warped"],
        gt_onbody_mask=imgs["gt_onbody_mask"],
        gt_image=imgs["gt_image"],
        keypoints=kps,
    )


def make_dataset(out_dir, count: int, seed: int, image_size=(256, 192),
                 tps_k: int = 5, max_offset: float = 0.12) -> list:
    """Write ``count`` samples (seeds seed..seed+count-1) under out_dir."""
    out = Path(out_dir)
    samples = []
    for i in range(count):
        spec = random_spec(seed + i, image_size=image_size, tps_k=tps_k,
                           max_offset=max_offset)
        sample = synth_sample(spec)
        save_sample(out / f"{i:05d}", sample)
        samples.append(sample)
    return samples


def load_dataset(data_dir) -> list:
    d = Path(data_dir)
    dirs = sorted(p for p in d.iterdir() if p.is_dir())
    if not dirs:
        raise ArgumentError(f"no sample directories under {d}")
    return [load_sample(p) for p in dirs]
