"""Report figures written next to the CSV outputs."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps the PNG bytes independent of the matplotlib version string
_PNG_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)


def loss_curve(history, path, title="training loss"):
    iters = [row[0] for row in history]
    losses = [row[1] for row in history]
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    ax.semilogy(iters, losses, lw=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def image_comparison(reference, reconstruction, path, psnr_db=None, ssim_value=None):
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.6))
    err = np.abs(reference.pixels - reconstruction.pixels).mean(axis=2)
    axes[0].imshow(reference.pixels)
    axes[0].set_title("reference")
    label = "reconstruction"
    if psnr_db is not None:
        label += f"\nPSNR {psnr_db:.2f} dB, SSIM {ssim_value:.4f}"
    axes[1].imshow(reconstruction.pixels)
    axes[1].set_title(label)
    im = axes[2].imshow(err, cmap="magma")
    axes[2].set_title("mean abs error")
    fig.colorbar(im, ax=axes[2], fraction=0.046)
    for ax in axes:
        ax.set_axis_off()
    fig.tight_layout()
    _save(fig, path)


def sdf_slices(reference, model_sdf, path, z=0.5, size=160):
    """Reference vs model distance on the plane ``z = const`` with their zero contours."""
    t = (np.arange(size) + 0.5) / size
    x, y = np.meshgrid(t, t)
    pts = np.stack([x.ravel(), y.ravel(), np.full(x.size, z)], axis=1)
    ref = np.asarray(reference(pts)).reshape(size, size)
    got = np.asarray(model_sdf(pts)).reshape(size, size)
    lim = float(np.max(np.abs(ref)))
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.8))
    for ax, field, title in zip(axes, (ref, got), ("reference", "model")):
        ax.imshow(field, origin="lower", extent=(0, 1, 0, 1), cmap="RdBu", vmin=-lim, vmax=lim)
        ax.contour(x, y, field, levels=[0.0], colors="k", linewidths=0.8)
        ax.set_title(f"{title}, z = {z:g}")
    fig.tight_layout()
    _save(fig, path)


def budget_bars(rows, path):
    names = [r[0] for r in rows]
    enc = [r[1] for r in rows]
    mlp = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(names, enc, label="encoding")
    ax.bar(names, mlp, bottom=enc, label="MLP")
    ax.set_ylabel("trainable parameters")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)
