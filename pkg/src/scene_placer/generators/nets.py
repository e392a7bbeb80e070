"""The two conditional VAEs: pose (MLP) and contact (spiral convolution)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from scene_placer.generators.layers import (
    Affine,
    LeakyRelu,
    SpiralConv,
    collect_params,
)

POSE_INPUT_DIM = 63
POSE_LATENT_DIM = 64
ACTION_DIM = 3
CONTACT_LATENT_DIM = 256
OBJECT_DIM = 42


@dataclass
class LatentDistribution:
    """Diagonal Gaussian over the latent space."""

    mu: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.mu).all() and np.isfinite(self.log_var).all()):
            raise ValueError("latent distribution has non-finite parameters")


def reparameterize(dist: LatentDistribution, noise: np.ndarray) -> np.ndarray:
    """z = mu + exp(log_var / 2) * noise, with externally supplied noise."""
    return dist.mu + np.exp(dist.log_var / 2.0) * noise


class PoseCvae:
    """Action-conditioned pose VAE.

    The one-hot action code joins the hidden features of both encoder and
    decoder; the encoder sees only the pose, the decoder only the latent.
    """

    def __init__(self, hidden: int = 256, seed: int = 0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        self.hidden = hidden
        self.dtype = dtype
        self.enc1 = Affine(POSE_INPUT_DIM, hidden, rng, dtype)
        self.enc2 = Affine(hidden + ACTION_DIM, hidden, rng, dtype)
        self.mu_head = Affine(hidden + ACTION_DIM, POSE_LATENT_DIM, rng, dtype)
        self.lv_head = Affine(hidden + ACTION_DIM, POSE_LATENT_DIM, rng, dtype)
        self.dec1 = Affine(POSE_LATENT_DIM, hidden, rng, dtype)
        self.dec2 = Affine(hidden + ACTION_DIM, hidden, rng, dtype)
        self.out_head = Affine(hidden + ACTION_DIM, POSE_INPUT_DIM, rng, dtype)
        # A single one-hot channel against a 256-wide hidden block starts
        # inaudible; boost the decoder's action rows so conditioning is the
        # path of least resistance before the latent becomes informative.
        for layer in (self.dec2, self.out_head):
            layer.params["W"][hidden:, :] *= 10.0
        self._acts = {}
        self._cache = {}

    def layers(self):
        return [
            ("enc1", self.enc1), ("enc2", self.enc2),
            ("mu_head", self.mu_head), ("lv_head", self.lv_head),
            ("dec1", self.dec1), ("dec2", self.dec2),
            ("out_head", self.out_head),
        ]

    def parameters(self):
        return collect_params(self.layers())

    def zero_grad(self):
        for _, layer in self.layers():
            layer.zero_grad()

    def encode(self, theta: np.ndarray, action: np.ndarray) -> LatentDistribution:
        a1 = LeakyRelu()
        a2 = LeakyRelu()
        h1 = a1.forward(self.enc1.forward(theta))
        h1c = np.concatenate([h1, action], axis=1)
        h2 = a2.forward(self.enc2.forward(h1c))
        h2c = np.concatenate([h2, action], axis=1)
        self._acts["enc"] = (a1, a2)
        mu = self.mu_head.forward(h2c)
        log_var = self.lv_head.forward(h2c)
        return LatentDistribution(mu, log_var)

    def decode(self, z: np.ndarray, action: np.ndarray) -> np.ndarray:
        a1 = LeakyRelu()
        a2 = LeakyRelu()
        g1 = a1.forward(self.dec1.forward(z))
        g1c = np.concatenate([g1, action], axis=1)
        g2 = a2.forward(self.dec2.forward(g1c))
        g2c = np.concatenate([g2, action], axis=1)
        self._acts["dec"] = (a1, a2)
        return self.out_head.forward(g2c)

    def forward(
        self, theta: np.ndarray, action: np.ndarray, noise: np.ndarray
    ) -> tuple[LatentDistribution, np.ndarray]:
        dist = self.encode(theta, action)
        z = reparameterize(dist, noise)
        self._cache = {"noise": noise, "std": np.exp(dist.log_var / 2.0)}
        return dist, self.decode(z, action)

    def backward(
        self, d_recon: np.ndarray, d_mu: np.ndarray, d_log_var: np.ndarray
    ) -> None:
        """Accumulate parameter gradients for one forward() call."""
        a1, a2 = self._acts["dec"]
        g = self.out_head.backward(d_recon)[:, : self.hidden]
        g = a2.backward(g)
        g = self.dec2.backward(g)[:, : self.hidden]
        g = a1.backward(g)
        dz = self.dec1.backward(g)

        d_mu = d_mu + dz
        d_log_var = d_log_var + 0.5 * dz * self._cache["noise"] * self._cache["std"]

        a1, a2 = self._acts["enc"]
        g = (
            self.mu_head.backward(d_mu)[:, : self.hidden]
            + self.lv_head.backward(d_log_var)[:, : self.hidden]
        )
        g = a2.backward(g)
        g = self.enc2.backward(g)[:, : self.hidden]
        g = a1.backward(g)
        self.enc1.backward(g)


class ContactCvae:
    """Object-conditioned contact VAE over the simplified body mesh.

    Encoder: per-vertex (contact, position) features through spiral
    convolutions, mean-pooled into the latent heads. Decoder: per-vertex
    positions with the latent code and object one-hot broadcast to every
    vertex, through spiral convolutions into a per-vertex probability.
    """

    def __init__(
        self,
        spiral_indices: np.ndarray,
        width: int = 64,
        seed: int = 0,
        dtype=np.float64,
    ):
        rng = np.random.default_rng(seed)
        self.dtype = dtype
        self.width = width
        self.v_count = len(spiral_indices)
        self.enc_sc = [
            SpiralConv(spiral_indices, 4, width, rng, dtype=dtype),
            SpiralConv(spiral_indices, width, width, rng, dtype=dtype),
            SpiralConv(spiral_indices, width, width, rng, dtype=dtype),
        ]
        self.mu_head = Affine(width, CONTACT_LATENT_DIM, rng, dtype)
        self.lv_head = Affine(width, CONTACT_LATENT_DIM, rng, dtype)
        dec_in = 3 + CONTACT_LATENT_DIM + OBJECT_DIM
        L = spiral_indices.shape[1]
        # Latent channels scale by their group size; one-hot object channels
        # fire singly, so they get per-channel scale to actually condition.
        cond_std = np.concatenate([
            np.full(CONTACT_LATENT_DIM, 0.3 * np.sqrt(2.0 / (L * CONTACT_LATENT_DIM))),
            np.full(OBJECT_DIM, 0.3 * np.sqrt(2.0 / L)),
        ])
        self.dec_sc = [
            SpiralConv(spiral_indices, dec_in, width, rng,
                       constant_channels=CONTACT_LATENT_DIM + OBJECT_DIM,
                       constant_init_std=cond_std,
                       dtype=dtype),
            SpiralConv(spiral_indices, width, width, rng, dtype=dtype),
            SpiralConv(spiral_indices, width, 1, rng, activation="sigmoid",
                       dtype=dtype),
        ]
        # Contact labels are sparse: bias the squashed output toward the
        # base rate so the shared head is not dragged into the zero rail by
        # the majority gradient while contact regions are still learned.
        self.dec_sc[-1].params["b"][:] = -2.2
        # Start with a narrow posterior: early reconstruction gradients then
        # see conditioning instead of unit-variance latent noise.
        self.lv_head.params["b"][:] = -6.0
        self._cache = {}

    def layers(self):
        named = [(f"enc_sc{i}", l) for i, l in enumerate(self.enc_sc)]
        named += [("mu_head", self.mu_head), ("lv_head", self.lv_head)]
        named += [(f"dec_sc{i}", l) for i, l in enumerate(self.dec_sc)]
        return named

    def parameters(self):
        return collect_params(self.layers())

    def zero_grad(self):
        for _, layer in self.layers():
            layer.zero_grad()

    def encode(self, f_hat: np.ndarray, simplified: np.ndarray) -> LatentDistribution:
        x = np.concatenate([f_hat[:, :, None], simplified], axis=2)
        for conv in self.enc_sc:
            x = conv.forward(x)
        pooled = x.mean(axis=1)
        return LatentDistribution(
            self.mu_head.forward(pooled), self.lv_head.forward(pooled)
        )

    def decode(
        self, z: np.ndarray, simplified: np.ndarray, obj: np.ndarray
    ) -> np.ndarray:
        broadcast = np.concatenate([z, obj], axis=1).astype(simplified.dtype)
        x = self.dec_sc[0].forward(simplified, broadcast)
        x = self.dec_sc[1].forward(x)
        x = self.dec_sc[2].forward(x)
        return x[:, :, 0]

    def forward(
        self,
        f_hat: np.ndarray,
        simplified: np.ndarray,
        obj: np.ndarray,
        noise: np.ndarray,
    ) -> tuple[LatentDistribution, np.ndarray]:
        dist = self.encode(f_hat, simplified)
        z = reparameterize(dist, noise)
        self._cache = {"noise": noise, "std": np.exp(dist.log_var / 2.0)}
        return dist, self.decode(z, simplified, obj)

    def backward(
        self, d_recon: np.ndarray, d_mu: np.ndarray, d_log_var: np.ndarray
    ) -> None:
        g = d_recon[:, :, None]
        g = self.dec_sc[2].backward(g)
        g = self.dec_sc[1].backward(g)
        _, d_broadcast = self.dec_sc[0].backward(g)
        dz = d_broadcast[:, :CONTACT_LATENT_DIM]

        d_mu = d_mu + dz
        d_log_var = d_log_var + 0.5 * dz * self._cache["noise"] * self._cache["std"]

        pooled_grad = self.mu_head.backward(d_mu) + self.lv_head.backward(d_log_var)
        g = np.broadcast_to(
            pooled_grad[:, None, :] / self.v_count,
            (len(pooled_grad), self.v_count, pooled_grad.shape[1]),
        )
        for conv in reversed(self.enc_sc):
            g = conv.backward(g)
