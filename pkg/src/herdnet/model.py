"""The multi-species activity classifier.

Architecture: a plain shared convolution stem, then a stack of dual-branch
convolution blocks. In each block a shared full-rank 1x3 kernel extracts
generic motion features while an additive per-species low-rank kernel
(factored as up @ down, with up zero-initialised) captures what is specific
to one species. Batch normalization after every block keeps one state per
species, because the species' feature distributions diverge. After global
average pooling and a shared fully connected layer, each species has its own
classifier head sized to its activity set.

Both species-specific mechanisms can be switched off independently, and the
low-rank branches can be swapped for zero-initialised full-rank ones, which
gives the ablation grid. Everything runs in float64 on the autodiff engine.
"""

from __future__ import annotations

import json
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .autodiff import Tensor, ops
from .config import ModelConfig

_ACTIVATIONS = {"relu": ops.relu, "tanh": ops.tanh}


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv1x3:
    """Shared full-rank 1x3 temporal convolution with bias."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 1):
        self.c_in, self.c_out = c_in, c_out
        self.stride, self.padding = stride, padding
        fan_in = 3 * c_in
        self.weight = Tensor(_uniform_init(rng, (c_out, 3, 1, c_in), fan_in), requires_grad=True)
        self.bias = Tensor(_uniform_init(rng, (c_out,), fan_in), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv1x3(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def named_params(self, prefix: str):
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias


class LowRankBranch:
    """Per-species additive kernel factored as up @ down.

    ``down`` (rank, c_in) is Gaussian, ``up`` (3 * c_out, rank) starts at
    zero, so a fresh branch contributes nothing and the trunk output is
    purely the shared kernel's. Rank must not exceed min(3 * c_out, c_in);
    beyond that the factorization stops being a compression. No bias: the
    shared branch already carries one.
    """

    full_rank = False

    def __init__(self, c_in: int, c_out: int, rank: int, sigma: float,
                 rng: np.random.Generator, stride: int = 1, padding: int = 1):
        bound = min(3 * c_out, c_in)
        if not 1 <= rank <= bound:
            raise ValueError(f"rank {rank} outside [1, {bound}] for a {c_in}->{c_out} branch")
        self.c_in, self.c_out, self.rank = c_in, c_out, rank
        self.stride, self.padding = stride, padding
        self.down = Tensor(rng.normal(0.0, sigma, size=(rank, c_in)), requires_grad=True)
        self.up = Tensor(np.zeros((3 * c_out, rank)), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        kernel = ops.reshape(ops.matmul(self.up, self.down), (self.c_out, 3, 1, self.c_in))
        return ops.conv1x3(x, kernel, None, stride=self.stride, padding=self.padding)

    def kernel_matrix(self) -> np.ndarray:
        """Materialized kernel flattened to (3 * c_out, c_in)."""
        return self.up.data @ self.down.data

    def param_count(self) -> int:
        return self.up.data.size + self.down.data.size

    def named_params(self, prefix: str):
        yield f"{prefix}.up", self.up
        yield f"{prefix}.down", self.down


class FullRankBranch:
    """Ablation variant: a zero-initialised full-rank per-species kernel."""

    full_rank = True

    def __init__(self, c_in: int, c_out: int, stride: int = 1, padding: int = 1):
        self.c_in, self.c_out = c_in, c_out
        self.stride, self.padding = stride, padding
        self.kernel = Tensor(np.zeros((c_out, 3, 1, c_in)), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv1x3(x, self.kernel, None, stride=self.stride, padding=self.padding)

    def kernel_matrix(self) -> np.ndarray:
        return self.kernel.data.reshape(3 * self.c_out, self.c_in)

    def param_count(self) -> int:
        return self.kernel.data.size

    def named_params(self, prefix: str):
        yield f"{prefix}.kernel", self.kernel


class SpeciesConv:
    """Shared conv plus an optional additive per-species branch."""

    def __init__(self, c_in: int, c_out: int, species: List[int], cfg: ModelConfig,
                 rng: np.random.Generator, branch_rng: np.random.Generator):
        self.shared = Conv1x3(c_in, c_out, rng)
        self.branches: Optional[Dict[int, object]] = None
        if cfg.use_species_conv:
            self.branches = {}
            for s in species:
                if cfg.full_rank_branches:
                    self.branches[s] = FullRankBranch(c_in, c_out)
                else:
                    self.branches[s] = LowRankBranch(c_in, c_out, cfg.rank, cfg.init_sigma,
                                                     branch_rng)

    def forward(self, x: Tensor, species_id: int) -> Tensor:
        y = self.shared.forward(x)
        if self.branches is not None:
            branch = self.branches.get(species_id)
            if branch is None:
                raise KeyError(f"unknown species id {species_id}")
            y = ops.add(y, branch.forward(x))
        return y

    def named_params(self, prefix: str):
        yield from self.shared.named_params(f"{prefix}.shared")
        if self.branches is not None:
            for s in sorted(self.branches):
                yield from self.branches[s].named_params(f"{prefix}.species{s}")


class BatchNorm:
    """One batch-normalization state: affine pair plus running statistics."""

    def __init__(self, channels: int, eps: float, momentum: float):
        self.channels = channels
        self.eps, self.momentum = eps, momentum
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x: Tensor, training: bool, update_stats: bool) -> Tensor:
        if training:
            if x.shape[0] < 2:
                raise ValueError("batch norm in training mode needs a batch of at least 2")
            out, mu, var = ops.batch_norm_train(x, self.gamma, self.beta, self.eps)
            if update_stats:
                n = x.shape[0] * (x.shape[3] if x.ndim == 4 else 1)
                m = self.momentum
                self.running_mean = (1.0 - m) * self.running_mean + m * mu
                self.running_var = (1.0 - m) * self.running_var + m * var * (n / (n - 1))
            return out
        inv = 1.0 / np.sqrt(self.running_var + self.eps)
        scale = ops.mul(self.gamma, Tensor(inv))
        shift = ops.sub(self.beta, ops.mul(Tensor(self.running_mean), scale))
        bshape = (1, self.channels) if x.ndim == 2 else (1, self.channels, 1, 1)
        return ops.add(ops.mul(x, ops.reshape(scale, bshape)), ops.reshape(shift, bshape))

    def named_params(self, prefix: str):
        yield f"{prefix}.gamma", self.gamma
        yield f"{prefix}.beta", self.beta

    def named_buffers(self, prefix: str):
        yield f"{prefix}.running_mean", self.running_mean
        yield f"{prefix}.running_var", self.running_var

    def set_buffer(self, name: str, value: np.ndarray) -> None:
        if name == "running_mean":
            self.running_mean = value
        elif name == "running_var":
            self.running_var = value
        else:
            raise KeyError(name)


class SpeciesBatchNorm:
    """Routes each sub-batch to its species' own batch-norm state.

    Statistics of species s are touched only by batches tagged s, both the
    batch statistics used in training mode and the running averages used at
    inference.
    """

    def __init__(self, channels: int, species: List[int], eps: float, momentum: float):
        self.states = {s: BatchNorm(channels, eps, momentum) for s in species}

    def forward(self, x: Tensor, species_id: int, training: bool, update_stats: bool) -> Tensor:
        state = self.states.get(species_id)
        if state is None:
            raise KeyError(f"unknown species id {species_id}")
        return state.forward(x, training, update_stats)

    def named_params(self, prefix: str):
        for s in sorted(self.states):
            yield from self.states[s].named_params(f"{prefix}.species{s}")

    def named_buffers(self, prefix: str):
        for s in sorted(self.states):
            yield from self.states[s].named_buffers(f"{prefix}.species{s}")


class Linear:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.weight = Tensor(_uniform_init(rng, (n_out, n_in), n_in), requires_grad=True)
        self.bias = Tensor(_uniform_init(rng, (n_out,), n_in), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)

    def named_params(self, prefix: str):
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias


class _Block:
    def __init__(self, conv: SpeciesConv, bn):
        self.conv = conv
        self.bn = bn


class ActivityNet:
    """Multi-species trunk with per-species routing and heads."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        if not cfg.species_classes:
            raise ValueError("model config needs at least one species")
        if cfg.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {cfg.activation!r}")
        self.cfg = cfg
        self.seed = seed
        self.species = sorted(cfg.species_classes)
        self.training = True
        self._act = _ACTIVATIONS[cfg.activation]
        # independent streams so toggling the species modules (or changing the
        # rank) never shifts the shared-trunk or head initialization
        rng = np.random.default_rng([seed, 0])
        branch_rng = np.random.default_rng([seed, 1])
        head_rng = np.random.default_rng([seed, 2])

        widths = cfg.widths
        self.stem_conv = Conv1x3(cfg.in_channels, widths[0], rng)
        self.stem_bn = BatchNorm(widths[0], cfg.bn_eps, cfg.bn_momentum)
        self.blocks: List[_Block] = []
        for c_in, c_out in zip(widths[:-1], widths[1:]):
            conv = SpeciesConv(c_in, c_out, self.species, cfg, rng, branch_rng)
            if cfg.use_species_bn:
                bn = SpeciesBatchNorm(c_out, self.species, cfg.bn_eps, cfg.bn_momentum)
            else:
                bn = BatchNorm(c_out, cfg.bn_eps, cfg.bn_momentum)
            self.blocks.append(_Block(conv, bn))
        self.fc = Linear(widths[-1], cfg.fc_dim, rng)
        if cfg.use_species_bn:
            self.fc_bn = SpeciesBatchNorm(cfg.fc_dim, self.species, cfg.bn_eps, cfg.bn_momentum)
        else:
            self.fc_bn = BatchNorm(cfg.fc_dim, cfg.bn_eps, cfg.bn_momentum)
        self.heads = {s: Linear(cfg.fc_dim, cfg.species_classes[s], head_rng)
                      for s in self.species}

    # -- mode handling ------------------------------------------------------

    def train(self) -> "ActivityNet":
        self.training = True
        return self

    def eval(self) -> "ActivityNet":
        self.training = False
        return self

    # -- forward ------------------------------------------------------------

    def _bn(self, layer, x: Tensor, species_id: int, update_stats: bool) -> Tensor:
        if isinstance(layer, SpeciesBatchNorm):
            return layer.forward(x, species_id, self.training, update_stats)
        return layer.forward(x, self.training, update_stats)

    def trunk_forward(self, x, species_id: int, update_stats: Optional[bool] = None) -> Tensor:
        """Features before the classifier head for one species sub-batch."""
        if species_id not in self.cfg.species_classes:
            raise KeyError(f"unknown species id {species_id}")
        if update_stats is None:
            update_stats = self.training
        h = ops.as_tensor(x)
        if h.ndim == 3:
            h = ops.reshape(h, (1,) + h.shape)
        if h.shape[0] == 0:
            raise ValueError(f"empty sub-batch for species {species_id}")
        h = self.stem_conv.forward(h)
        h = self.stem_bn.forward(h, self.training, update_stats)
        h = self._act(h)
        h = ops.maxpool1d(h, 2, 2)
        for block in self.blocks:
            h = block.conv.forward(h, species_id)
            h = self._bn(block.bn, h, species_id, update_stats)
            h = self._act(h)
            h = ops.maxpool1d(h, 2, 2)
        h = ops.global_avg_pool(h)
        h = self.fc.forward(h)
        h = self._bn(self.fc_bn, h, species_id, update_stats)
        return self._act(h)

    def forward(self, batch: Dict[int, object],
                update_stats: Optional[bool] = None) -> Dict[int, Tensor]:
        """Map each species sub-batch (b, 3, 1, w) to its logits (b, k_s)."""
        logits = {}
        for s in sorted(batch):
            x = ops.as_tensor(batch[s])
            if self.training and (x.ndim != 4 or x.shape[0] == 0):
                raise ValueError(f"empty or unbatched sub-batch for species {s} in training mode")
            feats = self.trunk_forward(x, s, update_stats=update_stats)
            logits[s] = self.heads[s].forward(feats)
        return logits

    def predict(self, species_id: int, windows: np.ndarray, chunk: int = 512) -> np.ndarray:
        """Inference-mode class predictions for an array of (3, 1, w) windows."""
        from .autodiff import no_grad
        was_training = self.training
        self.eval()
        preds = []
        try:
            with no_grad():
                for lo in range(0, len(windows), chunk):
                    part = windows[lo:lo + chunk]
                    feats = self.trunk_forward(Tensor(part), species_id, update_stats=False)
                    logits = self.heads[species_id].forward(feats)
                    preds.append(np.argmax(logits.data, axis=1))
        finally:
            self.training = was_training
        return np.concatenate(preds) if preds else np.zeros(0, dtype=np.intp)

    # -- parameter traversal --------------------------------------------------

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        yield from self.stem_conv.named_params("stem.conv")
        yield from self.stem_bn.named_params("stem.bn")
        for i, block in enumerate(self.blocks, start=1):
            yield from block.conv.named_params(f"block{i}.conv")
            yield from block.bn.named_params(f"block{i}.bn")
        yield from self.fc.named_params("fc")
        yield from self.fc_bn.named_params("fc_bn")
        for s in self.species:
            yield from self.heads[s].named_params(f"head{s}")

    def named_buffers(self) -> Iterator[Tuple[str, np.ndarray]]:
        yield from self.stem_bn.named_buffers("stem.bn")
        for i, block in enumerate(self.blocks, start=1):
            yield from block.bn.named_buffers(f"block{i}.bn")
        yield from self.fc_bn.named_buffers("fc_bn")

    def parameters(self) -> List[Tensor]:
        return [t for _, t in self.named_parameters()]

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.grad = None

    def decay_param_paths(self) -> List[str]:
        """Paths of parameters subject to L2 decay: conv and FC weights only.

        Batch-norm affines and every bias stay decay-free.
        """
        keep = ("weight", "up", "down", "kernel")
        return [path for path, _ in self.named_parameters() if path.rsplit(".", 1)[-1] in keep]

    def species_param_paths(self, species_id: int) -> List[str]:
        tag = f"species{species_id}"
        return [path for path, _ in self.named_parameters()
                if tag in path.split(".") or path.startswith(f"head{species_id}.")]

    # -- state snapshot / restore ---------------------------------------------

    def state_arrays(self) -> Dict[str, np.ndarray]:
        state = {path: t.data for path, t in self.named_parameters()}
        for path, buf in self.named_buffers():
            state[f"buffer:{path}"] = buf
        return state

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.state_arrays().items()}

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        expected = set(params) | {f"buffer:{p}" for p, _ in self.named_buffers()}
        if set(state) != expected:
            missing = sorted(expected - set(state))[:4]
            extra = sorted(set(state) - expected)[:4]
            raise ValueError(f"state mismatch; missing={missing} extra={extra}")
        buffer_owners = dict(self._buffer_owners())
        for key, value in state.items():
            if key.startswith("buffer:"):
                path = key[len("buffer:"):]
                owner, leaf = buffer_owners[path]
                owner.set_buffer(leaf, np.array(value, dtype=np.float64))
            else:
                tensor = params[key]
                if tensor.data.shape != value.shape:
                    raise ValueError(f"shape mismatch for {key}: {tensor.data.shape} vs {value.shape}")
                tensor.data = np.array(value, dtype=np.float64)

    def _buffer_owners(self):
        def bn_states(prefix, layer):
            if isinstance(layer, SpeciesBatchNorm):
                for s in sorted(layer.states):
                    yield f"{prefix}.species{s}", layer.states[s]
            else:
                yield prefix, layer

        layers = [("stem.bn", self.stem_bn)]
        layers += [(f"block{i}.bn", b.bn) for i, b in enumerate(self.blocks, start=1)]
        layers += [("fc_bn", self.fc_bn)]
        for prefix, layer in layers:
            for state_prefix, state in bn_states(prefix, layer):
                yield f"{state_prefix}.running_mean", (state, "running_mean")
                yield f"{state_prefix}.running_var", (state, "running_var")

    def bn_layers(self) -> List[Tuple[str, object]]:
        """(name, layer) for every normalization site, stem first."""
        out = [("stem.bn", self.stem_bn)]
        out += [(f"block{i}.bn", b.bn) for i, b in enumerate(self.blocks, start=1)]
        out.append(("fc_bn", self.fc_bn))
        return out


def build_model(cfg: ModelConfig, seed: int = 0) -> ActivityNet:
    return ActivityNet(cfg, seed=seed)


def param_report(model: ActivityNet) -> dict:
    """Exact parameter counts per component.

    For low-rank branch models the report asserts that the per-species
    branch total stays strictly below what full-rank branches would cost;
    that is the efficiency argument for the factorization.
    """
    cfg = model.cfg
    shared = model.stem_conv.weight.data.size + model.stem_conv.bias.data.size
    shared += model.fc.weight.data.size + model.fc.bias.data.size
    branch_per_species = 0
    full_rank_equiv = 0
    for block in model.blocks:
        conv = block.conv
        shared += conv.shared.weight.data.size + conv.shared.bias.data.size
        full_rank_equiv += conv.shared.weight.data.size  # same shape as a FR branch kernel
        if conv.branches is not None:
            any_branch = conv.branches[model.species[0]]
            branch_per_species += any_branch.param_count()
    bn_per_species = {}
    bn_shared = 0
    for _, layer in model.bn_layers():
        if isinstance(layer, SpeciesBatchNorm):
            for s, state in layer.states.items():
                bn_per_species[s] = bn_per_species.get(s, 0) + state.gamma.data.size * 2
        else:
            bn_shared += layer.gamma.data.size * 2
    shared += bn_shared
    heads = {s: model.heads[s].weight.data.size + model.heads[s].bias.data.size
             for s in model.species}

    report = {
        "shared_trunk": shared,
        "species_branch_per_species": branch_per_species,
        "species_branch_total": branch_per_species * len(model.species),
        "full_rank_branch_per_species": full_rank_equiv,
        "species_bn": bn_per_species,
        "heads": heads,
        "total": shared + branch_per_species * len(model.species)
                 + sum(bn_per_species.values()) + sum(heads.values()),
    }
    if cfg.use_species_conv and not cfg.full_rank_branches:
        if branch_per_species >= full_rank_equiv:
            raise ValueError(
                f"low-rank branches ({branch_per_species} params/species) are not smaller than "
                f"full-rank ones ({full_rank_equiv}); lower the rank")
    return report


# -- checkpoint io -------------------------------------------------------------

def save_checkpoint(model: ActivityNet, path, extra: Optional[dict] = None) -> None:
    """Write a single npz with config echo, every parameter and buffer."""
    meta = {
        "format": "herdnet-checkpoint",
        "version": 1,
        "seed": model.seed,
        "model": {
            **{k: v for k, v in vars(model.cfg).items() if k != "species_classes"},
            "widths": list(model.cfg.widths),
            "species_classes": {str(k): v for k, v in model.cfg.species_classes.items()},
        },
        "extra": extra or {},
    }
    arrays = dict(model.state_arrays())
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"),
                                       dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> Tuple[ActivityNet, dict]:
    """Rebuild the model from a checkpoint; round trip is bit-exact."""
    with np.load(path, allow_pickle=False) as npz:
        arrays = {k: npz[k] for k in npz.files}
    meta = json.loads(bytes(arrays.pop("__meta__")).decode("utf-8"))
    if meta.get("format") != "herdnet-checkpoint":
        raise ValueError(f"{path} is not a herdnet checkpoint")
    model_kwargs = dict(meta["model"])
    model_kwargs["widths"] = tuple(model_kwargs["widths"])
    cfg = ModelConfig(**model_kwargs)
    model = ActivityNet(cfg, seed=meta["seed"])
    model.load_state(arrays)
    return model, meta.get("extra", {})
