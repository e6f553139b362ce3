from farfield.core.audio import AudioBuffer, power
from farfield.core.rng import SeededRng
from farfield.core.stft import Spectrogram, StftConfig, istft, stft
from farfield.core.wavio import read_wav, write_wav

__all__ = [
    "AudioBuffer",
    "SeededRng",
    "Spectrogram",
    "StftConfig",
    "istft",
    "power",
    "read_wav",
    "stft",
    "write_wav",
]
