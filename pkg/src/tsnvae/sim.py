"""Deterministic planar stand-in for the connector-insertion rig.

The world is an end-effector moving in XY above a fixed socket, holding a
plug grasped with a per-episode random offset and a small out-of-plane tilt
proxy.  Rendering is a pure function of state: the wrist camera shows a
socket glyph (position tracks socket - ee) and a plug glyph (tracks the
grasp offset); the tactile image shows the plug contact patch with a
position-dependent lighting gradient and radial lens distortion, so its
appearance is deliberately not translation-invariant.

Units are meters, seconds, radians.  Tilt is sampled proportional to the
grasp offset magnitude, and the insertion position includes a small
bilinear offset-tilt warp; both couplings are constructed (the physical rig
they mimic was never quantified) and their constants live below.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SimConfig",
    "WorldState",
    "PlanarInsertionEnv",
    "GRASP_OFFSET_MAX",
    "TILT_GAIN",
    "write_ppm",
    "read_ppm",
]

# grasp sampling: offset per axis ~ U(-3mm, 3mm); tilt ~ 20|offset| * U(-1, 1)
GRASP_OFFSET_MAX = 0.003
TILT_GAIN = 20.0

# camera view spans +-1.5 * half_width so the socket glyph stays fully in
# frame everywhere the (clipped) workspace allows; tactile view spans +-5 mm
_CAMERA_VIEW_FACTOR = 1.5
_TACTILE_VIEW_M = 0.010

_SOCKET_COLOR = np.array([0.20, 0.95, 0.40])
_PLUG_COLOR = np.array([0.95, 0.30, 0.25])
_SOCKET_SIGMA_PX = 2.2
_PLUG_SIGMA_PX = 1.6
# glyphs are two-scale: a broad skirt for long-range gradients plus a tight
# bright core so sub-pixel localization stays sharp at camera resolution
_CORE_SIGMA_PX = 0.9
_CORE_GAIN = 0.9

# tactile glyph: anisotropic blob, sheared by tilt, lit per channel
_TACTILE_COLOR = np.array([0.85, 0.85, 0.60])  # r == g keeps zero-state lighting symmetric
_TACTILE_SIGMA_PX = (3.0, 2.1)
_TACTILE_SHEAR_GAIN = 5.0
_TACTILE_BG = 0.12
_LIGHT_COEFF = 0.4
_DISTORTION_K = 1.5
# static marker-dot array on the sensing surface (dots do not move with the
# plug, so they carry no grasp information but anchor naive correlation)
_DOT_PITCH_PX = 6.0
_DOT_SIGMA_PX = 1.0
_DOT_DEPTH = 0.55


@dataclass(frozen=True)
class SimConfig:
    """Environment constants; defaults reproduce the desk-scale rig."""

    dt_collect: float = 0.5
    half_width: float = 0.05
    process_noise_std: float = 0.0001
    camera_size: int = 32
    tactile_size: int = 24
    action_limit: float = 0.01
    goal_warp_coeff: float = 0.1
    lighting_strength: float = 1.0
    distortion_strength: float = 1.0
    socket_pos: tuple[float, float] = (0.0, 0.0)
    seed: int = 0


@dataclass
class WorldState:
    """Ground-truth simulator state (never visible to trained models)."""

    ee_pos: np.ndarray
    grasp_offset: np.ndarray
    tilt: float
    socket_pos: np.ndarray

    def copy(self) -> "WorldState":
        return WorldState(
            self.ee_pos.copy(), self.grasp_offset.copy(), self.tilt, self.socket_pos.copy()
        )


def _blob(px_x, px_y, cx, cy, sigma):
    d2 = (px_x - cx) ** 2 + (px_y - cy) ** 2
    return np.exp(-0.5 * d2 / sigma**2) + _CORE_GAIN * np.exp(-0.5 * d2 / _CORE_SIGMA_PX**2)


class PlanarInsertionEnv:
    """Planar insertion environment; one instance per episode stream.

    ``reset(seed)`` draws the grasp and reseeds the internal noise stream,
    so distinct instances with distinct seeds can run in parallel.
    """

    def __init__(self, config: SimConfig | None = None):
        self.config = config or SimConfig()
        self._rng = None
        n = self.config.camera_size
        self._cam_px = np.meshgrid(np.arange(n, dtype=np.float64),
                                   np.arange(n, dtype=np.float64), indexing="xy")
        t = self.config.tactile_size
        self._tac_px = np.meshgrid(np.arange(t, dtype=np.float64),
                                   np.arange(t, dtype=np.float64), indexing="xy")

    # -- scales ------------------------------------------------------------

    @property
    def camera_px_per_m(self) -> float:
        c = self.config
        return c.camera_size / (2.0 * _CAMERA_VIEW_FACTOR * c.half_width)

    @property
    def tactile_px_per_m(self) -> float:
        return self.config.tactile_size / _TACTILE_VIEW_M

    # -- lifecycle ----------------------------------------------------------

    def reset(self, seed: int) -> WorldState:
        """Sample a fresh grasp and start pulled out at the insertion position."""
        self._rng = np.random.default_rng(seed)
        offset = self._rng.uniform(-GRASP_OFFSET_MAX, GRASP_OFFSET_MAX, size=2)
        tilt = TILT_GAIN * float(np.linalg.norm(offset)) * self._rng.uniform(-1.0, 1.0)
        state = WorldState(
            ee_pos=np.zeros(2),
            grasp_offset=offset,
            tilt=tilt,
            socket_pos=np.asarray(self.config.socket_pos, dtype=np.float64),
        )
        state.ee_pos = self.insertion_position(state)
        return state

    def step(self, state: WorldState, u, dt: float | None = None) -> WorldState:
        """Apply velocity u for dt seconds; clips action and workspace.

        Process noise is a diffusion: its displacement std scales with
        sqrt(dt / dt_collect) so one collection-rate step (0.5 s) has exactly
        ``process_noise_std``; re-ticking faster does not make the arm noisier.
        """
        if self._rng is None:
            raise RuntimeError("step before reset: call reset(seed) first")
        c = self.config
        dt = c.dt_collect if dt is None else float(dt)
        u = np.asarray(u, dtype=np.float64)
        if np.any(np.abs(u) > c.action_limit + 1e-12):
            warnings.warn(
                f"action {u} exceeds limit {c.action_limit} m/s; clamping", stacklevel=2
            )
            u = np.clip(u, -c.action_limit, c.action_limit)
        noise = 0.0
        if c.process_noise_std > 0.0:
            noise = self._rng.normal(
                0.0, c.process_noise_std * np.sqrt(dt / c.dt_collect), size=2
            )
        new = state.copy()
        new.ee_pos = self._clip_workspace(state.ee_pos + dt * u + noise, state.socket_pos)
        return new

    def move_to(self, state: WorldState, target) -> WorldState:
        """Servo straight to a commanded pose (the arm's internal controller).

        Lands within one repeatability draw of the target; used by the
        open-loop regression baselines.
        """
        if self._rng is None:
            raise RuntimeError("move_to before reset: call reset(seed) first")
        c = self.config
        noise = self._rng.normal(0.0, c.process_noise_std, size=2) if c.process_noise_std > 0 else 0.0
        new = state.copy()
        new.ee_pos = self._clip_workspace(np.asarray(target, dtype=np.float64) + noise,
                                          state.socket_pos)
        return new

    def _clip_workspace(self, ee, socket):
        hw = self.config.half_width
        return np.clip(ee, socket - hw, socket + hw)

    # -- geometry ------------------------------------------------------------

    def insertion_position(self, state: WorldState) -> np.ndarray:
        """EE position putting the plug exactly above the socket.

        socket - offset - warp_coeff * (offset_x*tilt, offset_y*tilt): the
        bilinear term is the out-of-plane displacement a purely in-plane
        compensation cannot cancel.
        """
        o = state.grasp_offset
        warp = np.array([o[0] * state.tilt, o[1] * state.tilt])
        return state.socket_pos - o - self.config.goal_warp_coeff * warp

    def is_success(self, state: WorldState, tol: float = 0.001) -> bool:
        if tol <= 0:
            raise ValueError(f"is_success: tol must be positive, got {tol}")
        err = float(np.linalg.norm(state.ee_pos - self.insertion_position(state)))
        return err <= tol

    # -- rendering ----------------------------------------------------------

    def render_camera(self, state: WorldState) -> np.ndarray:
        """Wrist camera view, (H, W, 3) float64 in [0, 1]; pure in state."""
        n = self.config.camera_size
        px_x, px_y = self._cam_px
        center = (n - 1) / 2.0
        s = self.camera_px_per_m
        rel = state.socket_pos - state.ee_pos
        sock = _blob(px_x, px_y, center + rel[0] * s, center + rel[1] * s, _SOCKET_SIGMA_PX)
        plug = _blob(px_x, px_y,
                     center + state.grasp_offset[0] * s,
                     center + state.grasp_offset[1] * s, _PLUG_SIGMA_PX)
        img = sock[..., None] * _SOCKET_COLOR + plug[..., None] * _PLUG_COLOR
        return np.clip(img, 0.0, 1.0)

    def render_tactile(self, state: WorldState) -> np.ndarray:
        """Gel-style contact image, (T, T, 3) in [0, 1]; depends only on grasp.

        The contact blob sits proportional to the grasp offset and is sheared
        by tilt; a radial lens distortion warps geometry and per-channel
        lighting ramps recolor the blob depending on where it sits, so equal
        patches at different positions do not look alike.
        """
        c = self.config
        t = c.tactile_size
        px_x, px_y = self._tac_px
        center = (t - 1) / 2.0
        s = self.tactile_px_per_m

        # radial lens distortion: evaluate the scene at warped source coords
        nx = (px_x - center) / (t / 2.0)
        ny = (px_y - center) / (t / 2.0)
        r2 = nx**2 + ny**2
        k = _DISTORTION_K * c.distortion_strength
        qx = center + (px_x - center) * (1.0 + k * r2)
        qy = center + (px_y - center) * (1.0 + k * r2)

        gx = center + state.grasp_offset[0] * s
        gy = center + state.grasp_offset[1] * s
        dx = qx - gx
        dy = qy - gy
        # inverse shear [[1, sh],[0, 1]]: x' = x - sh*y
        sh = _TACTILE_SHEAR_GAIN * state.tilt
        dxs = dx - sh * dy
        sx, sy = _TACTILE_SIGMA_PX
        blob = np.exp(-0.5 * ((dxs / sx) ** 2 + (dy / sy) ** 2))

        ls = c.lighting_strength
        m_r = 1.0 - _LIGHT_COEFF * ls * (1.0 - nx) / 2.0
        m_g = 1.0 - _LIGHT_COEFF * ls * (1.0 + nx) / 2.0
        m_b = 1.0 - _LIGHT_COEFF * ls * r2 / 2.0
        light = np.stack([m_r, m_g, m_b], axis=-1)

        # marker dots are fixed to the sensor surface: a centered, 180-degree
        # symmetric grid, darkening all channels equally
        half_pitch = _DOT_PITCH_PX / 2.0
        rx = (px_x - center) % _DOT_PITCH_PX - half_pitch
        ry = (px_y - center) % _DOT_PITCH_PX - half_pitch
        dots = np.exp(-0.5 * (rx**2 + ry**2) / _DOT_SIGMA_PX**2)
        dot_mask = 1.0 - _DOT_DEPTH * ls * dots

        img = light * dot_mask[..., None] * (_TACTILE_BG + blob[..., None] * _TACTILE_COLOR)
        return np.clip(img, 0.0, 1.0)


# -- image I/O ---------------------------------------------------------------


def write_ppm(image: np.ndarray, path) -> None:
    """Write an (H, W, 3) [0, 1] float image as binary 8-bit PPM (P6)."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"write_ppm: need (H, W, 3), got {img.shape}")
    h, w = img.shape[:2]
    data = (np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 PPM back into (H, W, 3) float64 in [0, 1]."""
    with open(path, "rb") as f:
        raw = f.read()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P6" or len(parts) < 4:
        raise ValueError(f"read_ppm: {path} is not a binary PPM")
    w, h = (int(v) for v in parts[1].split())
    maxval = int(parts[2])
    pixels = np.frombuffer(parts[3], dtype=np.uint8, count=h * w * 3)
    return pixels.reshape(h, w, 3).astype(np.float64) / maxval
