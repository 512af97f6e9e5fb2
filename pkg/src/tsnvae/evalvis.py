"""Latent-space diagnostics and benchmark reporting.

The latent map pairs every validation frame's posterior mean with its
ground-truth position, finds the signed axis assignment (a VAE latent is
identified only up to axis permutation and sign) maximizing total Pearson
correlation, and reports per-axis r and the least-squares slope of latent
against truth.  Slope near one means the latent space shares not just axes
but physical scale.

Exports are deterministic: the SVG is written with fixed number formatting
and carries no timestamps, so equal maps give equal bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import ModelBundle, camera_latent, goal_latent

__all__ = [
    "LatentMap",
    "MethodResult",
    "BenchmarkReport",
    "signed_axis_assignment",
    "correlation_metrics",
    "goal_placement_error",
    "export_latent_map",
    "export_report",
    "format_report_table",
]

BIG_ERROR_M = 0.050  # errors at or beyond 50 mm render as the >>50 sentinel


@dataclass
class LatentMap:
    latents: np.ndarray        # (N, 2) posterior means over validation frames
    truths: np.ndarray         # (N, 2) matching ground-truth ee positions
    goal_latents: np.ndarray   # (E, 2) per-episode latent goal predictions
    permutation: tuple         # latent index serving each physical axis
    signs: tuple               # sign applied to each served latent axis
    pearson_r: np.ndarray      # (2,) after the signed assignment
    slopes: np.ndarray         # (2,) least-squares slope latent vs truth

    @property
    def mean_abs_r(self) -> float:
        return float(np.mean(np.abs(self.pearson_r)))


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0.0:
        return 0.0
    return float((a * b).sum() / denom)


def signed_axis_assignment(latents: np.ndarray, truths: np.ndarray):
    """Search the 8 signed axis assignments (D=2) maximizing total r.

    Returns (permutation, signs, r, slopes) where r[i] is the Pearson
    correlation of signs[i]*latents[:, permutation[i]] against truths[:, i]
    and slopes[i] the least-squares slope of that regression.
    """
    latents = np.asarray(latents, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if latents.shape[0] < 3:
        raise ValueError(f"need at least 3 points for correlation, got {latents.shape[0]}")
    if latents.shape != truths.shape or latents.shape[1] != 2:
        raise ValueError(f"latents {latents.shape} and truths {truths.shape} must be (N, 2)")
    best = None
    for perm in ((0, 1), (1, 0)):
        for signs in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            rs = [
                _pearson(signs[i] * latents[:, perm[i]], truths[:, i]) for i in range(2)
            ]
            score = rs[0] + rs[1]
            if best is None or score > best[0]:
                best = (score, perm, signs, rs)
    _, perm, signs, rs = best
    slopes = []
    for i in range(2):
        t = truths[:, i]
        y = signs[i] * latents[:, perm[i]]
        tc = t - t.mean()
        denom = (tc * tc).sum()
        slopes.append(float((tc * (y - y.mean())).sum() / denom) if denom > 0 else 0.0)
    return perm, signs, np.array(rs), np.array(slopes)


def correlation_metrics(bundle: ModelBundle, validation_episodes) -> LatentMap:
    """Encode all validation frames and fit the signed latent-physical map."""
    images = np.concatenate(
        [np.stack([f[0].reshape(-1) for f in ep.frames]) for ep in validation_episodes]
    )
    truths = np.concatenate([ep.truth.ee_pos for ep in validation_episodes])
    latents = camera_latent(bundle, images)
    perm, signs, rs, slopes = signed_axis_assignment(latents, truths)
    goals = np.stack([goal_latent(bundle, ep.tactile) for ep in validation_episodes])
    return LatentMap(
        latents=latents,
        truths=truths,
        goal_latents=goals,
        permutation=perm,
        signs=signs,
        pearson_r=rs,
        slopes=slopes,
    )


def goal_placement_error(bundle: ModelBundle, validation_episodes) -> float:
    """Mean latent distance between the tactile goal and the encoded goal image."""
    dists = []
    for ep in validation_episodes:
        xg = goal_latent(bundle, ep.tactile)
        qg = camera_latent(bundle, ep.goal_image.reshape(1, -1))[0]
        dists.append(np.linalg.norm(xg - qg))
    return float(np.mean(dists))


# -- SVG export ----------------------------------------------------------------


def _hsl_color(tx: float, ty: float) -> str:
    """Hue tracks physical X (red to green), saturation tracks Y."""
    hue = 120.0 * min(max(tx, 0.0), 1.0)
    sat = 25.0 + 75.0 * min(max(ty, 0.0), 1.0)
    return f"hsl({hue:.1f},{sat:.1f}%,45%)"


def _star_path(cx: float, cy: float, r_out: float, r_in: float) -> str:
    pts = []
    for k in range(10):
        r = r_out if k % 2 == 0 else r_in
        ang = np.pi / 2 + k * np.pi / 5
        pts.append(f"{cx + r * np.cos(ang):.2f},{cy - r * np.sin(ang):.2f}")
    return "M" + " L".join(pts) + " Z"


def export_latent_map(lmap: LatentMap, path) -> None:
    """Standalone SVG scatter of the latent map with goal stars.

    Marker hue encodes the truth X position, saturation the truth Y; blue
    stars mark the tactile-predicted insertion positions.  Output bytes are
    a pure function of the map (no timestamps, fixed formatting).
    """
    if lmap.latents.shape[0] == 0:
        raise ValueError("export_latent_map: empty map")
    size, margin = 480, 56
    pts = np.concatenate([lmap.latents, lmap.goal_latents]) if len(lmap.goal_latents) else lmap.latents
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    lo = lo - 0.06 * span
    hi = hi + 0.06 * span
    span = hi - lo

    def sx(v):
        return margin + (v - lo[0]) / span[0] * (size - 2 * margin)

    def sy(v):
        return size - margin - (v - lo[1]) / span[1] * (size - 2 * margin)

    t_lo = lmap.truths.min(axis=0)
    t_span = np.maximum(lmap.truths.max(axis=0) - t_lo, 1e-12)

    out = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">'
    )
    out.append(f'<rect width="{size}" height="{size}" fill="#ffffff"/>')
    x0, y0, x1, y1 = margin, size - margin, size - margin, margin
    out.append(
        f'<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="#444444" stroke-width="1"/>'
    )
    for frac in (0.0, 0.5, 1.0):
        vx = lo[0] + frac * span[0]
        vy = lo[1] + frac * span[1]
        out.append(
            f'<text x="{sx(vx):.2f}" y="{size - margin + 18}" font-size="11" '
            f'text-anchor="middle" fill="#333333">{vx:.4f}</text>'
        )
        out.append(
            f'<text x="{margin - 8}" y="{sy(vy) + 4:.2f}" font-size="11" '
            f'text-anchor="end" fill="#333333">{vy:.4f}</text>'
        )
    out.append(
        f'<text x="{size / 2:.1f}" y="{size - 14}" font-size="13" text-anchor="middle" '
        f'fill="#111111">latent dimension 1 [m]</text>'
    )
    out.append(
        f'<text x="16" y="{size / 2:.1f}" font-size="13" text-anchor="middle" fill="#111111" '
        f'transform="rotate(-90 16 {size / 2:.1f})">latent dimension 2 [m]</text>'
    )
    for (px, py), (tx, ty) in zip(lmap.latents, lmap.truths):
        color = _hsl_color((tx - t_lo[0]) / t_span[0], (ty - t_lo[1]) / t_span[1])
        out.append(f'<circle cx="{sx(px):.2f}" cy="{sy(py):.2f}" r="3" fill="{color}" fill-opacity="0.85"/>')
    for gx, gy in lmap.goal_latents:
        out.append(
            f'<path d="{_star_path(sx(gx), sy(gy), 7.0, 3.0)}" fill="#1f4fd8" '
            f'stroke="#10307e" stroke-width="0.8"/>'
        )
    out.append("</svg>")
    data = "\n".join(out) + "\n"
    with open(path, "wb") as f:
        f.write(data.encode("utf-8"))


# -- benchmark report ------------------------------------------------------------


@dataclass
class MethodResult:
    method: str
    trials: int
    successes: int
    mean_error: float  # meters
    std_error: float   # meters

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials


@dataclass
class BenchmarkReport:
    methods: list
    trials: int
    config_fingerprint: str = ""

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "config_fingerprint": self.config_fingerprint,
            "methods": [
                {
                    "method": m.method,
                    "trials": m.trials,
                    "successes": m.successes,
                    "success_rate": m.success_rate,
                    "mean_error_m": m.mean_error,
                    "std_error_m": m.std_error,
                }
                for m in self.methods
            ],
        }


def _fmt_accuracy_mm(mean_m: float, std_m: float) -> str:
    if mean_m >= BIG_ERROR_M:
        return "≫50"
    return f"{mean_m * 1000:.1f}±{std_m * 1000:.1f}"


def format_report_table(report: BenchmarkReport) -> str:
    """Aligned plain-text table: method, success rate, accuracy in mm."""
    rows = [("Method", "Success rate", "Accuracy [mm]")]
    for m in report.methods:
        rate = f"{round(100 * m.success_rate):d}% ({m.successes}/{m.trials})"
        rows.append((m.method, rate, _fmt_accuracy_mm(m.mean_error, m.std_error)))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    line = "  ".join("-" * w for w in widths)
    out = []
    for k, r in enumerate(rows):
        out.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
        if k == 0:
            out.append(line)
    return "\n".join(out) + "\n"


def export_report(report: BenchmarkReport, stem) -> tuple:
    """Write <stem>.json and <stem>.txt; returns both paths."""
    stem = str(stem)
    json_path, txt_path = stem + ".json", stem + ".txt"
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    with open(txt_path, "w", encoding="utf-8") as f:
        f.write(format_report_table(report))
    return json_path, txt_path
