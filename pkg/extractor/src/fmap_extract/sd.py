"""Stable Diffusion UNet decoder features.

The source block and denoising timestep are not canonical anywhere, so both
are explicit here and recorded in the sidecar: the image is VAE-encoded,
noised to TIMESTEP with a seeded generator, and the output of decoder block
``up_blocks[1]`` (stride 16 at 512 input) is captured by a forward hook.
"""

import numpy as np

from .errors import BackboneUnavailableError

MODEL_ID = "runwayml/stable-diffusion-v1-5"
STRIDE = 16
TIMESTEP = 261
SEED = 0
LAYERS = (1,)  # up_blocks index; only the mid-decoder block is wired up

_state = {}


def _load():
    try:
        import torch
        from diffusers import AutoencoderKL, DDPMScheduler, UNet2DConditionModel
    except ImportError as exc:
        raise BackboneUnavailableError(
            f"sd15 needs torch and diffusers; install the extra: "
            f"pip install 'fmap-extract[sd]' (missing: {exc.name})"
        ) from exc
    if not _state:
        try:
            vae = AutoencoderKL.from_pretrained(MODEL_ID, subfolder="vae")
            unet = UNet2DConditionModel.from_pretrained(MODEL_ID, subfolder="unet")
            scheduler = DDPMScheduler.from_pretrained(MODEL_ID, subfolder="scheduler")
        except Exception as exc:
            raise BackboneUnavailableError(
                f"weights for {MODEL_ID} are unavailable ({exc.__class__.__name__}). "
                f"Populate the local HF cache (HF_HOME) on a machine with network "
                f"access, or use the 'stub-14' backbone for offline runs."
            ) from exc
        vae.eval()
        unet.eval()
        _state.update(torch=torch, vae=vae, unet=unet, scheduler=scheduler)
    return _state


def extract_features(image_rgb: np.ndarray, layer: int = 1) -> np.ndarray:
    """(h, w, 3) uint8 with stride-multiple dims -> (h/16, w/16, d) f32."""
    if layer not in LAYERS:
        raise ValueError(f"sd15 layer must be one of {list(LAYERS)}, got {layer}")
    h, w = image_rgb.shape[:2]
    if h % STRIDE or w % STRIDE:
        raise ValueError(f"image dims must be multiples of {STRIDE}, got {h}x{w}")
    s = _load()
    torch = s["torch"]
    pixels = image_rgb.astype(np.float32) / 127.5 - 1.0
    batch = torch.from_numpy(pixels.transpose(2, 0, 1)[None])

    captured = []
    hook = s["unet"].up_blocks[layer].register_forward_hook(
        lambda _m, _i, out: captured.append(out)
    )
    try:
        with torch.no_grad():
            latents = s["vae"].encode(batch).latent_dist.mode() * s["vae"].config.scaling_factor
            noise = torch.randn(latents.shape, generator=torch.Generator().manual_seed(SEED))
            t = torch.tensor([TIMESTEP])
            noisy = s["scheduler"].add_noise(latents, noise, t)
            d_ctx = s["unet"].config.cross_attention_dim
            s["unet"](noisy, t, encoder_hidden_states=torch.zeros(1, 77, d_ctx))
    finally:
        hook.remove()
    feats = captured[0][0].numpy().transpose(1, 2, 0)
    return np.ascontiguousarray(feats, dtype=np.float32)
