"""Smooth adversarial training lab: Python front end to the C++ core."""

from ._core import (
    Activation,
    ActivationPair,
    AttackConfig,
    ConfigError,
    DataError,
    Dataset,
    DivergenceError,
    Error,
    ModelSpec,
    ShapeError,
    ValueError,
    clean_accuracy,
    default_cnn,
    default_mlp,
    init_params,
    input_gradient,
    laplacian_roughness,
    load_checkpoint,
    load_idx,
    pgd,
    predict_logits,
    preset_list,
    preset_path,
    robust_accuracy,
    run_cli,
    save_checkpoint,
    synth_blobs,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
