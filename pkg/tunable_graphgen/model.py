"""
Neural components of the conditional sequence VAE and its feature estimator.

The model holds three owner-tagged submodules:

- encoder: LSTM over token embeddings (condition appended to every step)
  mapped to (mu, logvar);
- decoder: LSTM fed with the previous step's tokens and (latent, condition),
  emitting per-slot categorical distributions;
- estimator: 256-unit affine layer, 512-unit LSTM and a per-feature head,
  reading soft reconstructions and never the condition.

Parameter names start with their owner tag, which is what training freezes
and hashes.
"""

import hashlib
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field, model_validator
from torch.nn.utils.rnn import pack_padded_sequence

from .dataset import FeatureScaler
from .dfs_code import SLOT_NAMES, TokenSequence, end_step, vocab_sizes
from .errors import CheckpointError, ConfigError
from .utils import PathLike

logger = logging.getLogger(__name__)

OWNERS = ("encoder", "decoder", "estimator")
GENERATOR_OWNERS = ("encoder", "decoder")
CHECKPOINT_FORMAT = "tunable-graphgen-checkpoint"
CHECKPOINT_VERSION = 1

Sampler = Callable[[torch.Tensor], torch.Tensor]


class ModelConfig(BaseModel):
    """Model dimensions and loss weights."""
    model_config = ConfigDict(extra="forbid")

    max_nodes: int = Field(64, ge=2, description="Timestamp vocabulary size without the end symbol")
    n_labels: int = Field(1, ge=1, description="Label vocabulary size without the end symbol")
    max_sequence_length: int = Field(128, ge=2, description="Longest token sequence, end step included")
    condition_dim: int = Field(1, ge=1, description="Number of conditioned features")
    latent_dim: int = Field(10, ge=1)
    embedding_dim: int = Field(64, ge=1, description="Embedding size per token slot")
    encoder_hidden: int = Field(256, ge=1)
    decoder_hidden: int = Field(256, ge=1)
    estimator_pre_fc: int = Field(256, ge=1, description="Affine layer before the estimator LSTM")
    estimator_hidden: int = Field(512, ge=1, description="Estimator LSTM hidden size")
    estimator_out: Optional[int] = Field(None, ge=1, description="Estimator outputs, one per feature")
    kl_weight: float = Field(1.0, ge=0.0, allow_inf_nan=False)
    kl_anneal_fraction: float = Field(
        0.1, ge=0.0, le=1.0, description="Share of generator steps over which the KL weight ramps up"
    )
    feature_loss_weight: float = Field(1.0, ge=0.0, allow_inf_nan=False)

    @model_validator(mode="after")
    def check_estimator_out(self):
        if self.estimator_out is None:
            self.estimator_out = self.condition_dim
        elif self.estimator_out != self.condition_dim:
            raise ValueError(
                f"estimator_out ({self.estimator_out}) must equal condition_dim ({self.condition_dim})"
            )
        return self

    @property
    def vocab_sizes(self) -> Tuple[int, ...]:
        return vocab_sizes(self.max_nodes, self.n_labels)

    @property
    def eos(self) -> Tuple[int, ...]:
        return end_step(self.max_nodes, self.n_labels)

    @property
    def step_width(self) -> int:
        return len(SLOT_NAMES) * self.embedding_dim


@dataclass
class SoftSequence:
    """Per-step, per-slot log-probabilities of a reconstruction."""
    log_probs: Tuple[torch.Tensor, ...]
    lengths: torch.Tensor

    @property
    def probs(self) -> Tuple[torch.Tensor, ...]:
        return tuple(lp.exp() for lp in self.log_probs)

    @classmethod
    def from_tokens(cls, tokens: torch.Tensor, lengths: torch.Tensor,
                    sizes: Sequence[int], dtype=torch.float64) -> "SoftSequence":
        """One-hot soft sequence of hard tokens (log 0 = -inf off the target)."""
        log_probs = tuple(
            torch.log(F.one_hot(tokens[..., s], size).to(dtype)) for s, size in enumerate(sizes)
        )
        return cls(log_probs, lengths)


class SlotEmbedding(nn.Module):
    """One embedding table per token slot, concatenated per step."""

    def __init__(self, sizes: Sequence[int], embedding_dim: int):
        super().__init__()
        self.tables = nn.ModuleList(nn.Embedding(size, embedding_dim) for size in sizes)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        return torch.cat([table(tokens[..., s]) for s, table in enumerate(self.tables)], dim=-1)

    def expected(self, probs: Sequence[torch.Tensor]) -> torch.Tensor:
        """Probability-weighted embeddings; equals forward() for one-hot input."""
        return torch.cat([p @ table.weight for p, table in zip(probs, self.tables)], dim=-1)


def _final_hidden(lstm: nn.LSTM, inputs: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
    packed = pack_padded_sequence(inputs, lengths.cpu(), batch_first=True, enforce_sorted=False)
    _, (h_n, _) = lstm(packed)
    return h_n[-1]


class SequenceEncoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.embedding = SlotEmbedding(config.vocab_sizes, config.embedding_dim)
        self.lstm = nn.LSTM(config.step_width + config.condition_dim, config.encoder_hidden,
                            batch_first=True)
        self.mu_head = nn.Linear(config.encoder_hidden, config.latent_dim)
        self.logvar_head = nn.Linear(config.encoder_hidden, config.latent_dim)

    def forward(self, tokens: torch.Tensor, lengths: torch.Tensor,
                condition: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        steps = self.embedding(tokens)
        condition = condition.unsqueeze(1).expand(-1, steps.shape[1], -1)
        hidden = _final_hidden(self.lstm, torch.cat([steps, condition], dim=-1), lengths)
        return self.mu_head(hidden), self.logvar_head(hidden)


class SequenceDecoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.eos = config.eos
        context = config.latent_dim + config.condition_dim
        self.embedding = SlotEmbedding(config.vocab_sizes, config.embedding_dim)
        self.start = nn.Linear(context, config.step_width)
        self.lstm = nn.LSTM(config.step_width + context, config.decoder_hidden, batch_first=True)
        self.heads = nn.ModuleList(nn.Linear(config.decoder_hidden, size) for size in config.vocab_sizes)

    def forward(self, latent: torch.Tensor, condition: torch.Tensor,
                tokens: torch.Tensor, lengths: torch.Tensor) -> SoftSequence:
        context = torch.cat([latent, condition], dim=-1)
        steps = torch.cat(
            [self.start(context).unsqueeze(1), self.embedding(tokens[:, :-1])], dim=1
        )
        context = context.unsqueeze(1).expand(-1, steps.shape[1], -1)
        outputs, _ = self.lstm(torch.cat([steps, context], dim=-1))
        return SoftSequence(
            tuple(F.log_softmax(head(outputs), dim=-1) for head in self.heads), lengths
        )

    @torch.no_grad()
    def generate(self, latent: torch.Tensor, condition: torch.Tensor,
                 sampler: Sampler, max_steps: int) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Sample token steps autoregressively.

        Returns:
            (tokens, lengths): tokens of shape (B, T, 5) whose rows end with the
            end step (appended when max_steps is reached), and their lengths
        """
        batch = latent.shape[0]
        eos = torch.tensor(self.eos, dtype=torch.long)
        context = torch.cat([latent, condition], dim=-1).unsqueeze(1)
        step_input = torch.cat([self.start(context), context], dim=-1)
        state = None
        finished = torch.zeros(batch, dtype=torch.bool)
        lengths = torch.zeros(batch, dtype=torch.long)
        rows: List[torch.Tensor] = []
        for _ in range(max_steps):
            output, state = self.lstm(step_input, state)
            tokens = torch.stack([sampler(head(output[:, 0])) for head in self.heads], dim=-1)
            ended = tokens[:, 0] == eos[0]
            tokens = torch.where((ended | finished).unsqueeze(-1), eos, tokens)
            rows.append(tokens)
            lengths = torch.where(finished, lengths, lengths + 1)
            finished = finished | ended
            if bool(finished.all()):
                break
            step_input = torch.cat([self.embedding(tokens.unsqueeze(1)), context], dim=-1)
        rows.append(eos.expand(batch, -1))
        lengths = torch.where(finished, lengths, lengths + 1)
        return torch.stack(rows, dim=1), lengths


class FeatureEstimator(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.embedding = SlotEmbedding(config.vocab_sizes, config.embedding_dim)
        self.pre_fc = nn.Linear(config.step_width, config.estimator_pre_fc)
        self.lstm = nn.LSTM(config.estimator_pre_fc, config.estimator_hidden, batch_first=True)
        self.head = nn.Linear(config.estimator_hidden, config.estimator_out)

    def forward(self, soft: SoftSequence) -> torch.Tensor:
        steps = self.pre_fc(self.embedding.expected(soft.probs))
        return self.head(_final_hidden(self.lstm, steps, soft.lengths))


class ConditionalGraphVAE(nn.Module):
    """Encoder, decoder and feature estimator under their owner tags."""

    def __init__(self, config: ModelConfig, seed: Optional[int] = None):
        super().__init__()
        self.config = config
        self.encoder = SequenceEncoder(config)
        self.decoder = SequenceDecoder(config)
        self.estimator = FeatureEstimator(config)
        self.reset_parameters(seed)

    @torch.no_grad()
    def reset_parameters(self, seed: Optional[int] = None) -> None:
        """
        Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) everywhere, LSTM forget bias +1.

        Embedding tables use their vocabulary size as fan-in.
        """
        generator = torch.Generator()
        generator.manual_seed(0 if seed is None else seed)

        def fill(tensor: torch.Tensor, fan_in: int):
            bound = 1.0 / math.sqrt(fan_in)
            tensor.uniform_(-bound, bound, generator=generator)

        for module in self.modules():
            if isinstance(module, nn.Linear):
                fill(module.weight, module.in_features)
                fill(module.bias, module.in_features)
            elif isinstance(module, nn.Embedding):
                fill(module.weight, module.num_embeddings)
            elif isinstance(module, nn.LSTM):
                hidden = module.hidden_size
                fill(module.weight_ih_l0, module.input_size)
                fill(module.weight_hh_l0, hidden)
                fill(module.bias_ih_l0, module.input_size)
                fill(module.bias_hh_l0, hidden)
                # gate order is (input, forget, cell, output)
                module.bias_ih_l0[hidden:2 * hidden] = 1.0
                module.bias_hh_l0[hidden:2 * hidden] = 0.0


def owner_of(name: str) -> str:
    """
    Owner tag of a parameter: the first component of its dotted name.

    Args:
        name: Parameter name from named_parameters()

    Returns:
        One of OWNERS

    Raises:
        ConfigError: If the name carries no known owner tag
    """
    owner = name.split(".", 1)[0]
    if owner not in OWNERS:
        raise ConfigError(f"parameter {name} has no owner tag")
    return owner


def parameter_partition(model: ConditionalGraphVAE) -> Dict[str, Dict[str, nn.Parameter]]:
    """Trainable parameters grouped by owner tag."""
    partition: Dict[str, Dict[str, nn.Parameter]] = {owner: {} for owner in OWNERS}
    for name, param in model.named_parameters():
        partition[owner_of(name)][name] = param
    return partition


def owner_parameters(model: ConditionalGraphVAE, owners: Sequence[str]) -> Iterator[nn.Parameter]:
    for name, param in model.named_parameters():
        if owner_of(name) in owners:
            yield param


def set_trainable(model: ConditionalGraphVAE, owners: Sequence[str]) -> None:
    """Unfreeze the given owners and freeze every other partition."""
    for name, param in model.named_parameters():
        param.requires_grad_(owner_of(name) in owners)


def is_frozen(model: ConditionalGraphVAE, owner: str) -> bool:
    return all(not p.requires_grad for p in parameter_partition(model)[owner].values())


def partition_hash(model: ConditionalGraphVAE, owner: str) -> str:
    """SHA-256 of one partition's names and raw parameter bytes."""
    digest = hashlib.sha256()
    for name, param in sorted(parameter_partition(model)[owner].items()):
        digest.update(name.encode())
        digest.update(param.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def _check_width(tensor: torch.Tensor, width: int, what: str) -> None:
    if tensor.dim() != 2 or tensor.shape[-1] != width:
        raise ConfigError(f"{what} must have shape (batch, {width}), got {tuple(tensor.shape)}")


def _check_tokens(tokens: torch.Tensor, lengths: torch.Tensor, config: ModelConfig) -> None:
    if tokens.dim() != 3 or tokens.shape[-1] != len(SLOT_NAMES):
        raise ConfigError(f"tokens must have shape (batch, steps, {len(SLOT_NAMES)}), "
                          f"got {tuple(tokens.shape)}")
    if tokens.shape[1] > config.max_sequence_length:
        raise ConfigError(f"{tokens.shape[1]} steps exceed max_sequence_length="
                          f"{config.max_sequence_length}")
    if lengths.shape != (tokens.shape[0],) or int(lengths.min()) < 1 \
            or int(lengths.max()) > tokens.shape[1]:
        raise ConfigError("lengths must hold one value in [1, steps] per sequence")


def encoder_forward(model: ConditionalGraphVAE, tokens: torch.Tensor, lengths: torch.Tensor,
                    condition: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Map token sequences and their standardized conditions to (mu, logvar).

    Raises:
        ConfigError: On a dimension mismatch
    """
    _check_tokens(tokens, lengths, model.config)
    _check_width(condition, model.config.condition_dim, "condition")
    return model.encoder(tokens, lengths, condition)


def reparameterize(mu: torch.Tensor, logvar: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
    """latent = mu + exp(0.5 * logvar) * noise, with caller-drawn standard normal noise."""
    if not (mu.shape == logvar.shape == noise.shape):
        raise ConfigError(
            f"shape mismatch: mu {tuple(mu.shape)}, logvar {tuple(logvar.shape)}, "
            f"noise {tuple(noise.shape)}"
        )
    return mu + torch.exp(0.5 * logvar) * noise


def decoder_forward(model: ConditionalGraphVAE, latent: torch.Tensor, condition: torch.Tensor,
                    tokens: torch.Tensor, lengths: torch.Tensor) -> SoftSequence:
    """
    Teacher-forced decoder pass returning one distribution per step and slot.

    Raises:
        ConfigError: On a dimension mismatch
    """
    _check_tokens(tokens, lengths, model.config)
    _check_width(latent, model.config.latent_dim, "latent")
    _check_width(condition, model.config.condition_dim, "condition")
    return model.decoder(latent, condition, tokens, lengths)


def decoder_generate(model: ConditionalGraphVAE, latent: torch.Tensor, condition: torch.Tensor,
                     sampler: Sampler, max_steps: Optional[int] = None) -> List[TokenSequence]:
    """
    Autoregressive sampling; stops at the end token or after max_steps.

    Only decoder parameters are read.

    Raises:
        ConfigError: If max_steps exceeds max_sequence_length or on a
            dimension mismatch
    """
    config = model.config
    if max_steps is None:
        max_steps = config.max_sequence_length - 1
    if not 1 <= max_steps <= config.max_sequence_length:
        raise ConfigError(
            f"max_steps must be in [1, {config.max_sequence_length}], got {max_steps}"
        )
    _check_width(latent, config.latent_dim, "latent")
    _check_width(condition, config.condition_dim, "condition")
    tokens, lengths = model.decoder.generate(latent, condition, sampler, max_steps)
    return [
        TokenSequence.from_array(row[:length].numpy(), config.max_nodes, config.n_labels)
        for row, length in zip(tokens, lengths.tolist())
    ]


def estimator_forward(model: ConditionalGraphVAE, soft: SoftSequence) -> torch.Tensor:
    """
    Estimate standardized feature values from a soft sequence.

    Raises:
        ConfigError: On a dimension mismatch
    """
    sizes = model.config.vocab_sizes
    if len(soft.log_probs) != len(sizes) or any(
        lp.shape[-1] != size for lp, size in zip(soft.log_probs, sizes)
    ):
        raise ConfigError(f"soft sequence slots must have vocabulary sizes {sizes}")
    return model.estimator(soft)


def categorical_sampler(generator: torch.Generator, temperature: float = 1.0) -> Sampler:
    """Draw one index per row from softmax(logits / temperature)."""
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")

    def sample(logits: torch.Tensor) -> torch.Tensor:
        probs = F.softmax(logits / temperature, dim=-1)
        return torch.multinomial(probs, 1, generator=generator).squeeze(-1)

    return sample


def argmax_sampler() -> Sampler:
    """Take the most likely index per row; ties go to the lowest index."""
    return lambda logits: logits.argmax(dim=-1)


@dataclass
class Checkpoint:
    """A loaded checkpoint: model plus the data needed to use it."""
    model: ConditionalGraphVAE
    feature_order: Tuple[str, ...]
    scaler: FeatureScaler
    training_state: Optional[Dict[str, Any]] = None


def save_checkpoint(path: PathLike, model: ConditionalGraphVAE, feature_order: Sequence[str],
                    scaler: FeatureScaler, training_state: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write a versioned checkpoint of plain containers and tensors.

    Layout: format, version, model_config, owners (name -> owner tag),
    state_dict, feature_order, scaler, training_state.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "model_config": model.config.model_dump(),
            "owners": {name: owner_of(name) for name, _ in model.named_parameters()},
            "state_dict": model.state_dict(),
            "feature_order": list(feature_order),
            "scaler": scaler.to_dict(),
            "training_state": training_state,
        },
        path,
    )
    logger.info("saved checkpoint %s", path)
    return path


def load_checkpoint(path: PathLike) -> Checkpoint:
    """
    Read a checkpoint written by save_checkpoint.

    Raises:
        CheckpointError: If the file is unreadable or malformed
    """
    try:
        data = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}")
    except Exception as e:
        raise CheckpointError(f"unreadable checkpoint {path}: {e}")
    if not isinstance(data, dict) or data.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if data.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {data.get('version')}")
    try:
        config = ModelConfig.model_validate(data["model_config"])
        model = ConditionalGraphVAE(config)
        state = data["state_dict"]
        dtype = next(iter(state.values())).dtype
        model.to(dtype)
        model.load_state_dict(state)
        owners = {name: owner_of(name) for name, _ in model.named_parameters()}
        if owners != data["owners"]:
            raise CheckpointError("owner tags do not match the model layout")
        scaler = FeatureScaler.from_dict(data["scaler"])
    except (KeyError, ValueError, RuntimeError) as e:
        raise CheckpointError(f"malformed checkpoint {path}: {e}")
    return Checkpoint(model, tuple(data["feature_order"]), scaler, data.get("training_state"))
