"""Two-stage video generation: motion-content autoencoding plus diffusion over motion latents."""

__version__ = "0.1.0"
