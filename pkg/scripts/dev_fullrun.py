"""Dev-only: full-scale TS-NVAE training + metric check (not part of the package)."""
import sys
import time

import numpy as np

from tsnvae.sim import SimConfig, PlanarInsertionEnv
from tsnvae.data import collect_dataset, save_dataset, split_dataset
from tsnvae.model import (
    hyperparams_for_variant, train, collate_episodes, camera_latent,
    tactile_latent, goal_latent, predict_goal,
)
from tsnvae.train import save_checkpoint
from tsnvae.autodiff import Tape

variant = sys.argv[1] if len(sys.argv) > 1 else "TS-NVAE"
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 20000

cfg = SimConfig()
t0 = time.time()
episodes = collect_dataset(cfg, 100, [1000 + i for i in range(100)])
train_eps, val_eps = split_dataset(episodes, 30, seed=7)
print(f"collected in {time.time()-t0:.1f}s", flush=True)

hp = hyperparams_for_variant(variant, train_steps=steps)
t0 = time.time()
bundle, losses = train(train_eps, hp, seed=11,
                       progress=lambda s, v: print(f"  step {s}: loss {v:.4g} [{time.time()-t0:.0f}s]", flush=True))
print(f"trained {steps} steps in {time.time()-t0:.1f}s; loss[0]={losses[0]:.4g} loss[-1]={losses[-1]:.4g}", flush=True)

# correlation metrics over validation frames
lat = []
truth = []
for ep in val_eps:
    imgs = np.stack([f[0].reshape(-1) for f in ep.frames])
    lat.append(camera_latent(bundle, imgs))
    truth.append(ep.truth.ee_pos)
lat = np.concatenate(lat)
truth = np.concatenate(truth)

def pearson(a, b):
    a = a - a.mean(); b = b - b.mean()
    return float((a*b).sum() / np.sqrt((a*a).sum()*(b*b).sum()))

best = None
for perm in ([0,1],[1,0]):
    rs = [pearson(lat[:, perm[i]], truth[:, i]) for i in range(2)]
    score = sum(abs(r) for r in rs)
    if best is None or score > best[0]:
        slopes = []
        for i in range(2):
            x = truth[:, i]; y = lat[:, perm[i]]
            slopes.append(float(np.polyfit(x, y, 1)[0]))
        best = (score, perm, rs, slopes)
score, perm, rs, slopes = best
print(f"perm {perm} r={rs} slopes={slopes}", flush=True)

# goal placement: |predict_goal(z).mean - encode_camera(I_g).mean| averaged
dists = []
for ep in val_eps:
    xg = goal_latent(bundle, ep.tactile)
    qg = camera_latent(bundle, ep.goal_image.reshape(1, -1))[0]
    dists.append(np.linalg.norm(xg - qg))
print(f"goal placement mean {np.mean(dists):.6f} max {np.max(dists):.6f}", flush=True)

# goal vs truth insertion in latent coords: compare latent goal to latent of
# truth insertion (via nearest val frame? use encode of goal image as ref)
# plus quick control sanity: latent error when standing at the truth insertion
errs = []
for ep in val_eps[:20]:
    env = PlanarInsertionEnv(cfg)
    st = env.reset(99999)
    st.grasp_offset = ep.truth.grasp_offset.copy()
    st.tilt = ep.truth.tilt
    st.ee_pos = ep.truth.insertion_pos.copy()
    img = env.render_camera(st)
    x_here = camera_latent(bundle, img.reshape(1, -1))[0]
    xg = goal_latent(bundle, ep.tactile)
    errs.append(np.linalg.norm(xg - x_here))
print(f"latent goal error at true insertion: mean {np.mean(errs)*1000:.3f}mm max {np.max(errs)*1000:.3f}mm", flush=True)

import os
os.makedirs("/root/pkg/.devcache", exist_ok=True)
tag = variant.replace("/", "_")
save_checkpoint(bundle, f"/root/pkg/.devcache/{tag}.ckpt", losses)
save_dataset(episodes, "/root/pkg/.devcache/dev100.tsnv", cfg)
print("saved", flush=True)
