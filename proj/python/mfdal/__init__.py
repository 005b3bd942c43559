"""Multi-fidelity neural-process surrogates and active learning on PDE tasks."""

from ._core import (
    ContractError,
    DiagGaussian,
    DomainError,
    IncompatibleCheckpoint,
    LevelSamples,
    MultiFidelityDataset,
    ParseError,
    Prediction,
    QueryCandidate,
    SurrogateConfig,
    SurrogateModel,
    TaskSpec,
    TrainingError,
    default_config,
    fuse,
    generate_dataset,
    greedy_batch,
    kl,
    latent_posteriors,
    load_checkpoint,
    log_density,
    mf_lig_score,
    nrmse,
    passive_dataset,
    plot_curves,
    predict,
    read_dataset,
    run_active,
    run_experiment,
    save_checkpoint,
    simulate,
    symmetrized_divergence,
    train,
    write_dataset,
)

__all__ = [name for name in dir() if not name.startswith("_")]
