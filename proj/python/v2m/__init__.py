"""Video-conditioned music generation.

Feature extraction, diffusion training and sampling over paired
frame-sequence/audio clips, with a latent codec and rhythm scoring.
"""

from ._core import (  # noqa: F401
    LATENT_FPS,
    LATENT_WIDTH,
    SAMPLE_RATE,
    __version__,
    alignment_score,
    cfg_combine,
    compare_rhythm,
    extract_features,
    generate,
    gradient_battery,
    latent_decode,
    latent_encode,
    mel,
    onset_envelope,
    p_pred,
    read_wav,
    rhythm_repr,
    scene_transitions,
    schedule,
    self_test,
    stft,
    synthetic_pair,
    train,
    video_features,
    write_synthetic_clip,
    write_wav,
)

__all__ = [
    "LATENT_FPS",
    "LATENT_WIDTH",
    "SAMPLE_RATE",
    "__version__",
    "alignment_score",
    "cfg_combine",
    "compare_rhythm",
    "extract_features",
    "generate",
    "gradient_battery",
    "latent_decode",
    "latent_encode",
    "mel",
    "onset_envelope",
    "p_pred",
    "read_wav",
    "rhythm_repr",
    "scene_transitions",
    "schedule",
    "self_test",
    "stft",
    "synthetic_pair",
    "train",
    "video_features",
    "write_synthetic_clip",
    "write_wav",
]
