"""
Training the LSTM denoiser
==========================

The denoiser reads 2-second windows of the preliminary estimate together
with the three noise channels and learns to output the contact pulse. The
full-size model (2 layers, 128 units, 200 scenes) takes a few minutes on one
core; the defaults here are smaller so the script finishes in under a minute.
"""

import argparse
import time

import numpy as np

from distraction import metrics, pipeline
from distraction.denoise import TrainConfig, denoise_lstm
from distraction.synth import SceneConfig

parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
parser.add_argument("--scenes", type=int, default=40)
parser.add_argument("--hidden", type=int, default=16)
parser.add_argument("--epochs", type=int, default=10)
args = parser.parse_args()


def config(seed, frames):
    r = np.random.default_rng(seed)
    return SceneConfig(frames=frames, seed=seed, hr_knots=((0.0, float(r.uniform(55, 110))),),
                       flicker_amp=float(r.uniform(0.024, 0.05)))


train = [pipeline.render_signals(config(s, 300)) for s in range(args.scenes)]
test = [pipeline.render_signals(config(500 + s, 900)) for s in range(5)]

t0 = time.perf_counter()
model, trace = pipeline.train_denoiser(train, TrainConfig(hidden=args.hidden, epochs=args.epochs))
print(f"trained on {args.scenes} scenes in {time.perf_counter() - t0:.0f} s")
print("loss per epoch:", " ".join(f"{v:.4f}" for v in trace))

###############################################################################
# Held-out scenes: waveform error before and after denoising.
for s in test:
    out = denoise_lstm(model, s.estimate, s.noise)
    print(f"HR {s.hr_bpm[0]:5.1f}  WMAE {metrics.wmae(s.target, s.estimate):.3f} -> "
          f"{metrics.wmae(s.target, out):.3f}  HR estimate {metrics.estimate_rate(out)[0]:.1f}")
