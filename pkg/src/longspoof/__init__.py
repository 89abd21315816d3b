"""Long-form noisy partial-spoof dataset generation and evaluation."""

__version__ = "0.1.0"

from longspoof.audio_io import AudioBuffer, load_wav, save_wav

__all__ = ["AudioBuffer", "load_wav", "save_wav", "__version__"]
