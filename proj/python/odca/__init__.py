"""Gated obstacle-distance repair toolkit."""

from ._odca import (
    AffineAlignment,
    DeltaHead,
    GateConfig,
    OdcaError,
    SensorFrame,
    SensorSequence,
    apply_attack,
    auprc,
    auroc,
    bounded_degradation,
    config_echo,
    fit_alignment,
    forecast,
    fuse,
    gate,
    generate,
    load_sequence,
    mae,
    persistence_sweep,
    repair,
    rgr,
    rmse,
    save_sequence,
    train,
)

__version__ = "0.1.0"
