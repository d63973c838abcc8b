"""
Audio features and datasets
"""

from features.audio import (
    AudioClip,
    LogMelPatch,
    load_wav,
    log_mel,
    mel_filterbank,
    remove_silence,
    resample,
    segment,
    stft_magnitude,
    write_wav,
)
from features.dataset import (
    FeatureCache,
    FeatureKind,
    PatchPool,
    build_synthetic_pool,
    load_audio_directory,
    write_synthetic_audio,
)
from features.synth import (
    LeafVariant,
    SynthFamily,
    SynthManifest,
    gaussian_hierarchy_vectors,
    load_manifest,
    synth_instrument,
    synth_recording,
)

__all__ = [
    'AudioClip',
    'FeatureCache',
    'FeatureKind',
    'LeafVariant',
    'LogMelPatch',
    'PatchPool',
    'SynthFamily',
    'SynthManifest',
    'build_synthetic_pool',
    'gaussian_hierarchy_vectors',
    'load_audio_directory',
    'load_manifest',
    'load_wav',
    'log_mel',
    'mel_filterbank',
    'remove_silence',
    'resample',
    'segment',
    'stft_magnitude',
    'synth_instrument',
    'synth_recording',
    'write_synthetic_audio',
    'write_wav',
]
