"""
Losses and the alternate training schedule.

Each iteration trains the generator (encoder + decoder) with the estimator
frozen, then the estimator with the generator frozen. The first generator
phase runs without the feature term because the estimator is still
untrained. Frozen partitions are hashed before and after every phase.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from pydantic import BaseModel, ConfigDict, Field

from .dataset import DatasetManifest, FeatureScaler
from .dfs_code import SLOT_NAMES, to_tokens
from .errors import (
    ConfigError,
    ContractError,
    DivergenceError,
    EmptyDatasetError,
    TrainingContractError,
)
from .model import (
    GENERATOR_OWNERS,
    OWNERS,
    Checkpoint,
    ConditionalGraphVAE,
    ModelConfig,
    SoftSequence,
    decoder_forward,
    encoder_forward,
    estimator_forward,
    is_frozen,
    owner_parameters,
    partition_hash,
    reparameterize,
    set_trainable,
)
from .utils import PathLike

logger = logging.getLogger(__name__)

GENERATOR_PHASE = "generator"
ESTIMATOR_PHASE = "estimator"
PHASES = (GENERATOR_PHASE, ESTIMATOR_PHASE)
DTYPES = {"float32": torch.float32, "float64": torch.float64}


class TrainConfig(BaseModel):
    """Alternate training schedule and optimizer settings."""
    model_config = ConfigDict(extra="forbid")

    batch_size: int = Field(37, ge=1, description="Graphs per mini-batch")
    generator_epochs_per_phase: int = Field(500, ge=1, description="Epochs of each generator phase")
    estimator_epochs_per_phase: int = Field(10000, ge=1, description="Epochs of each estimator phase")
    alternate_iterations: int = Field(2, ge=1, description="Generator/estimator phase pairs")
    learning_rate: float = Field(1e-3, gt=0.0, allow_inf_nan=False, description="Adam learning rate")
    seed: int = Field(0, description="Seed for initialization, shuffling and noise")
    feature_loss_weight: Optional[float] = Field(
        None, ge=0.0, allow_inf_nan=False,
        description="Overrides the model's feature loss weight; 0 trains the baseline",
    )
    grad_clip: float = Field(5.0, gt=0.0, description="Gradient-norm clipping threshold")
    dtype: Literal["float32", "float64"] = Field("float32")
    log_every: int = Field(50, ge=1, description="Epochs between progress log lines")


@dataclass
class Batch:
    """Padded token steps with their standardized features."""
    tokens: torch.Tensor
    lengths: torch.Tensor
    features: torch.Tensor

    def __len__(self) -> int:
        return self.tokens.shape[0]

    @property
    def condition(self) -> torch.Tensor:
        # the condition during training is the input graph's own features
        return self.features

    def select(self, index: torch.Tensor) -> "Batch":
        return Batch(self.tokens[index], self.lengths[index], self.features[index])


def configure_for_manifest(config: ModelConfig, manifest: DatasetManifest) -> ModelConfig:
    """Fill the dataset-derived model fields from a manifest."""
    data = config.model_dump()
    data.update(
        max_nodes=manifest.max_nodes,
        max_sequence_length=manifest.max_sequence_length,
        condition_dim=len(manifest.feature_order),
        estimator_out=None,
    )
    return ModelConfig.model_validate(data)


def manifest_batch(manifest: DatasetManifest, scaler: FeatureScaler, config: ModelConfig,
                   dtype: torch.dtype = torch.float32) -> Batch:
    """Tokenize every record, padding with end steps to a common length."""
    if len(manifest.feature_order) != config.condition_dim:
        raise ConfigError(
            f"manifest has {len(manifest.feature_order)} features, model expects {config.condition_dim}"
        )
    sequences = [
        to_tokens(r.code, config.max_nodes, config.n_labels, config.max_sequence_length).to_array()
        for r in manifest.records
    ]
    steps = max(len(s) for s in sequences)
    tokens = np.tile(np.asarray(config.eos, dtype=np.int64), (len(sequences), steps, 1))
    for row, sequence in enumerate(sequences):
        tokens[row, :len(sequence)] = sequence
    features = scaler.transform(np.stack([r.features.to_array() for r in manifest.records]))
    return Batch(
        torch.from_numpy(tokens),
        torch.tensor([len(s) for s in sequences], dtype=torch.long),
        torch.tensor(features, dtype=dtype),
    )


def reconstruction_loss(soft: SoftSequence, target: torch.Tensor) -> torch.Tensor:
    """
    Cross-entropy summed over valid steps and slots, averaged over the batch.

    Raises:
        ContractError: If the prediction and target shapes differ
    """
    if target.dim() != 3 or target.shape[-1] != len(soft.log_probs):
        raise ContractError(f"target must have shape (batch, steps, {len(soft.log_probs)})")
    for log_probs in soft.log_probs:
        if log_probs.shape[:2] != target.shape[:2]:
            raise ContractError(
                f"prediction covers {tuple(log_probs.shape[:2])} steps, target {tuple(target.shape[:2])}"
            )
    steps = target.shape[1]
    mask = torch.arange(steps).unsqueeze(0) < soft.lengths.unsqueeze(1)
    total = torch.zeros((), dtype=soft.log_probs[0].dtype)
    for slot, log_probs in enumerate(soft.log_probs):
        nll = -log_probs.gather(-1, target[..., slot:slot + 1]).squeeze(-1)
        total = total + torch.where(mask, nll, torch.zeros_like(nll)).sum()
    return total / target.shape[0]


def kl_loss(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)) per sample, averaged over the batch."""
    if mu.shape != logvar.shape:
        raise ContractError(f"mu {tuple(mu.shape)} and logvar {tuple(logvar.shape)} differ")
    return (0.5 * (mu.pow(2) + logvar.exp() - 1.0 - logvar).sum(dim=-1)).mean()


def feature_loss(estimate: torch.Tensor, truth: torch.Tensor,
                 estimate_order: Optional[Sequence[str]] = None,
                 truth_order: Optional[Sequence[str]] = None) -> torch.Tensor:
    """
    Mean squared error over feature entries, averaged over the batch.

    Raises:
        ContractError: If shapes or the given feature orders differ
    """
    if estimate_order is not None and truth_order is not None \
            and tuple(estimate_order) != tuple(truth_order):
        raise ContractError(f"feature order {tuple(estimate_order)} != {tuple(truth_order)}")
    if estimate.shape != truth.shape:
        raise ContractError(f"estimate {tuple(estimate.shape)} and truth {tuple(truth.shape)} differ")
    return (estimate - truth).pow(2).mean()


@dataclass
class LossBreakdown:
    total: torch.Tensor
    reconstruction: Optional[torch.Tensor] = None
    kl: Optional[torch.Tensor] = None
    feature: Optional[torch.Tensor] = None


def generator_phase_loss(batch: Batch, model: ConditionalGraphVAE, noise: torch.Tensor,
                         kl_weight: float, feature_loss_weight: float) -> LossBreakdown:
    """
    Reconstruction + kl_weight * KL + feature_loss_weight * estimator feedback.

    The estimator must be frozen; its gradient still flows back through its
    fixed weights into the encoder and decoder.

    Raises:
        TrainingContractError: If the estimator partition is trainable
    """
    if not is_frozen(model, "estimator"):
        raise TrainingContractError("estimator must be frozen during a generator phase")
    mu, logvar = encoder_forward(model, batch.tokens, batch.lengths, batch.condition)
    latent = reparameterize(mu, logvar, noise)
    soft = decoder_forward(model, latent, batch.condition, batch.tokens, batch.lengths)
    reconstruction = reconstruction_loss(soft, batch.tokens)
    kl = kl_loss(mu, logvar)
    total = reconstruction + kl_weight * kl
    if feature_loss_weight > 0:
        feature = feature_loss(estimator_forward(model, soft), batch.features)
        total = total + feature_loss_weight * feature
    else:
        with torch.no_grad():
            feature = feature_loss(estimator_forward(model, soft), batch.features)
    return LossBreakdown(total, reconstruction, kl, feature)


def estimator_phase_loss(batch: Batch, model: ConditionalGraphVAE,
                         noise: torch.Tensor) -> LossBreakdown:
    """
    Feature error of the estimator on reconstructions of the frozen generator.

    Raises:
        TrainingContractError: If the encoder or decoder is trainable
    """
    if not all(is_frozen(model, owner) for owner in GENERATOR_OWNERS):
        raise TrainingContractError("encoder and decoder must be frozen during an estimator phase")
    with torch.no_grad():
        mu, logvar = encoder_forward(model, batch.tokens, batch.lengths, batch.condition)
        latent = reparameterize(mu, logvar, noise)
        soft = decoder_forward(model, latent, batch.condition, batch.tokens, batch.lengths)
    loss = feature_loss(estimator_forward(model, soft), batch.features)
    return LossBreakdown(loss, feature=loss)


@dataclass
class TraceRecord:
    iteration: int
    phase: str
    epoch: int
    reconstruction: Optional[float] = None
    kl: Optional[float] = None
    feature: Optional[float] = None
    estimator: Optional[float] = None


@dataclass
class PhaseBoundary:
    iteration: int
    phase: str
    position: str
    encoder: str
    decoder: str
    estimator: str


@dataclass
class TrainTrace:
    """Per-epoch losses and partition hashes at every phase boundary."""
    records: List[TraceRecord] = field(default_factory=list)
    boundaries: List[PhaseBoundary] = field(default_factory=list)

    def phase_order(self) -> List[Tuple[int, str]]:
        return [(b.iteration, b.phase) for b in self.boundaries if b.position == "start"]

    def to_frame(self) -> pd.DataFrame:
        columns = [f.name for f in TraceRecord.__dataclass_fields__.values()]
        return pd.DataFrame([asdict(r) for r in self.records], columns=columns)

    def boundaries_frame(self) -> pd.DataFrame:
        columns = [f.name for f in PhaseBoundary.__dataclass_fields__.values()]
        return pd.DataFrame([asdict(b) for b in self.boundaries], columns=columns)

    def write_csv(self, directory: PathLike) -> Tuple[Path, Path]:
        """Write trace.csv and phase_hashes.csv into a directory."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        trace_path = directory / "trace.csv"
        hashes_path = directory / "phase_hashes.csv"
        self.to_frame().to_csv(trace_path, index=False)
        self.boundaries_frame().to_csv(hashes_path, index=False)
        return trace_path, hashes_path

    def to_dict(self) -> Dict[str, List[Dict[str, Any]]]:
        return {
            "records": [asdict(r) for r in self.records],
            "boundaries": [asdict(b) for b in self.boundaries],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, List[Dict[str, Any]]]) -> "TrainTrace":
        return cls(
            [TraceRecord(**r) for r in data["records"]],
            [PhaseBoundary(**b) for b in data["boundaries"]],
        )


PhaseCallback = Callable[[int, str, ConditionalGraphVAE, Dict[str, Any]], None]


def _partition_hashes(model: ConditionalGraphVAE) -> Dict[str, str]:
    return {owner: partition_hash(model, owner) for owner in OWNERS}


def train_alternate(manifest: DatasetManifest, mconfig: ModelConfig, tconfig: TrainConfig,
                    on_phase_end: Optional[PhaseCallback] = None,
                    resume: Optional[Checkpoint] = None) -> Tuple[ConditionalGraphVAE, TrainTrace]:
    """
    Train generator and estimator alternately with Adam.

    For each of alternate_iterations: a generator phase (estimator frozen,
    feature weight 0 on the first iteration) then an estimator phase
    (encoder and decoder frozen). Mini-batches are reshuffled every epoch
    from the seeded generator.

    Args:
        manifest: Training records
        mconfig: Model configuration matching the manifest
        tconfig: Training schedule
        on_phase_end: Called as (iteration, phase, model, training_state)
            after every phase, e.g. to write a checkpoint
        resume: Checkpoint holding a training_state to continue from

    Returns:
        Trained model and its trace

    Raises:
        EmptyDatasetError: If the manifest holds no records
        ConfigError: If the model configuration does not fit the manifest
        DivergenceError: On a non-finite loss, carrying the trace so far
        TrainingContractError: If a frozen partition changed
    """
    if len(manifest) == 0:
        raise EmptyDatasetError("manifest holds no records")
    if mconfig.max_nodes < manifest.max_nodes \
            or mconfig.max_sequence_length < manifest.max_sequence_length:
        raise ConfigError("model vocabulary is smaller than the manifest requires")
    dtype = DTYPES[tconfig.dtype]
    feature_weight = (
        mconfig.feature_loss_weight if tconfig.feature_loss_weight is None
        else tconfig.feature_loss_weight
    )

    generator = torch.Generator()
    generator.manual_seed(tconfig.seed)
    if resume is not None:
        if resume.training_state is None:
            raise ConfigError("checkpoint holds no training state to resume from")
        model = resume.model.to(dtype)
        scaler = resume.scaler
    else:
        model = ConditionalGraphVAE(mconfig, seed=tconfig.seed).to(dtype)
        scaler = manifest.scaler()
    data = manifest_batch(manifest, scaler, model.config, dtype)

    groups = {GENERATOR_PHASE: list(GENERATOR_OWNERS), ESTIMATOR_PHASE: ["estimator"]}
    optimizers = {
        phase: torch.optim.Adam(list(owner_parameters(model, owners)), lr=tconfig.learning_rate)
        for phase, owners in groups.items()
    }
    schedule = [(k, phase) for k in range(1, tconfig.alternate_iterations + 1) for phase in PHASES]
    trace = TrainTrace()
    completed = 0
    generator_steps = 0
    if resume is not None:
        state = resume.training_state
        completed = int(state["completed_phases"])
        generator_steps = int(state["generator_steps"])
        generator.set_state(state["rng_state"])
        for phase, optimizer in optimizers.items():
            optimizer.load_state_dict(state["optimizers"][phase])
        trace = TrainTrace.from_dict(state["trace"])
        logger.info("resuming after %d of %d phases", completed, len(schedule))

    n = len(manifest)
    batches_per_epoch = math.ceil(n / tconfig.batch_size)
    total_generator_steps = (
        tconfig.alternate_iterations * tconfig.generator_epochs_per_phase * batches_per_epoch
    )
    anneal_steps = mconfig.kl_anneal_fraction * total_generator_steps

    for index in range(completed, len(schedule)):
        iteration, phase = schedule[index]
        owners = groups[phase]
        set_trainable(model, owners)
        parameters = list(owner_parameters(model, owners))
        optimizer = optimizers[phase]
        before = _partition_hashes(model)
        trace.boundaries.append(PhaseBoundary(iteration, phase, "start", **before))
        epochs = (
            tconfig.generator_epochs_per_phase if phase == GENERATOR_PHASE
            else tconfig.estimator_epochs_per_phase
        )
        weight = 0.0 if iteration == 1 else feature_weight
        logger.info("iteration %d: %s phase, %d epochs", iteration, phase, epochs)

        for epoch in range(epochs):
            order = torch.randperm(n, generator=generator)
            sums: Dict[str, float] = {}
            batches = 0
            for start in range(0, n, tconfig.batch_size):
                batch = data.select(order[start:start + tconfig.batch_size])
                noise = torch.randn(len(batch), model.config.latent_dim,
                                    generator=generator, dtype=dtype)
                if phase == GENERATOR_PHASE:
                    kl_weight = mconfig.kl_weight * (
                        min(1.0, generator_steps / anneal_steps) if anneal_steps > 0 else 1.0
                    )
                    losses = generator_phase_loss(batch, model, noise, kl_weight, weight)
                    generator_steps += 1
                    parts = {
                        "reconstruction": losses.reconstruction,
                        "kl": losses.kl,
                        "feature": losses.feature,
                    }
                else:
                    losses = estimator_phase_loss(batch, model, noise)
                    parts = {"estimator": losses.total}
                if not torch.isfinite(losses.total):
                    raise DivergenceError(
                        f"non-finite loss in iteration {iteration} {phase} phase, epoch {epoch}",
                        trace=trace,
                    )
                optimizer.zero_grad(set_to_none=True)
                losses.total.backward()
                torch.nn.utils.clip_grad_norm_(parameters, tconfig.grad_clip)
                optimizer.step()
                for key, value in parts.items():
                    sums[key] = sums.get(key, 0.0) + float(value.detach())
                batches += 1
            means = {key: value / batches for key, value in sums.items()}
            trace.records.append(TraceRecord(iteration, phase, epoch, **means))
            if (epoch + 1) % tconfig.log_every == 0 or epoch + 1 == epochs:
                logger.info(
                    "iteration %d %s epoch %d/%d: %s", iteration, phase, epoch + 1, epochs,
                    ", ".join(f"{k}={v:.4f}" for k, v in means.items()),
                )

        after = _partition_hashes(model)
        for owner in OWNERS:
            if owner not in owners and before[owner] != after[owner]:
                raise TrainingContractError(f"frozen {owner} changed during {phase} phase")
        trace.boundaries.append(PhaseBoundary(iteration, phase, "end", **after))
        if on_phase_end is not None:
            on_phase_end(iteration, phase, model, {
                "completed_phases": index + 1,
                "generator_steps": generator_steps,
                "rng_state": generator.get_state(),
                "optimizers": {p: opt.state_dict() for p, opt in optimizers.items()},
                "trace": trace.to_dict(),
            })

    set_trainable(model, OWNERS)
    return model, trace
