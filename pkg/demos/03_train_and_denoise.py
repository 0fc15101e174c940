"""Train the two-branch convolutional autoencoder and denoise with it.

End-to-end at a small scale (a couple of minutes on one CPU core):

1. build a noisy/clean patch dataset from synthetic images at peak 4;
2. train the default architecture from scratch with RMSProp (the whole
   engine is plain numpy -- no autograd framework underneath);
3. denoise held-out images and compare against the noisy input and the
   VST + Gaussian-blur baseline;
4. save the weights and verify the reload reproduces the output bit for
   bit.

The patch size is dropped to 16 here to keep the run short; the library
default is 64. Run:  python3 demos/03_train_and_denoise.py
"""

import os
import tempfile
import time

import numpy as np

from poisson_denoise import (NetworkConfig, build_network, corrupt_image,
                             denoise_image, gaussian_blur_denoiser,
                             load_network, save_network, train,
                             vst_denoise_pipeline)
from poisson_denoise.patches import build_dataset
from poisson_denoise.stats import psnr_images
from synth import synth_image

PEAK = 4.0

print("=== Building the dataset ===")
train_imgs = [synth_image(i, size=64, peak=PEAK) for i in range(12)]
test_imgs = [synth_image(100 + i, size=64, peak=PEAK) for i in range(3)]
noisy_train = [corrupt_image(im, 1000 + i) for i, im in enumerate(train_imgs)]
noisy_test = [corrupt_image(im, 5000 + i) for i, im in enumerate(test_imgs)]
dataset = build_dataset(
    [(f"img{i}", im) for i, im in enumerate(train_imgs)],
    noisy_train, patches_per_image=48, patch_size=16, peak=PEAK, seed=7)
print(f"{dataset.inputs.shape[0]} patch pairs "
      f"({len(dataset.train_indices)} train / {len(dataset.val_indices)} val)")

print()
print("=== Training ===")
net = build_network(NetworkConfig(patch_size=16, seed=11))
print(f"parameters: {net.parameter_count:,} "
      "(two branches, strided convs mirrored by transposed convs, "
      "additive skip connections)")
t0 = time.perf_counter()
report = train(net, dataset, epochs=16, batch_size=48, learning_rate=1e-3,
               seed=13)
print(f"trained {report.epochs_completed} epochs "
      f"in {time.perf_counter() - t0:.0f}s")
for e, (tr, va) in enumerate(zip(report.train_mse, report.val_mse), 1):
    print(f"  epoch {e}: train mse {tr:.5f}  val mse {va:.5f}")

print()
print("=== Held-out comparison ===")
blur = gaussian_blur_denoiser(sigma=1.0)
rows = []
for k, (clean, noisy) in enumerate(zip(test_imgs, noisy_test)):
    rows.append((psnr_images(clean, noisy),
                 psnr_images(clean, vst_denoise_pipeline(noisy, blur)),
                 psnr_images(clean, denoise_image(net, noisy, stride=4))))
    print(f"  image {k}: noisy {rows[-1][0]:5.2f} dB  "
          f"VST+blur {rows[-1][1]:5.2f} dB  network {rows[-1][2]:5.2f} dB")
means = np.mean(rows, axis=0)
print(f"  mean   : noisy {means[0]:5.2f} dB  "
      f"VST+blur {means[1]:5.2f} dB  network {means[2]:5.2f} dB")

print()
print("=== Save / reload roundtrip ===")
with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "net.pdnw")
    save_network(net, path)
    reloaded = load_network(path)
    a = denoise_image(net, noisy_test[0], stride=4).pixels
    b = denoise_image(reloaded, noisy_test[0], stride=4).pixels
    print(f"weights file: {os.path.getsize(path):,} bytes, "
          f"reload output identical: {np.array_equal(a, b)}")
