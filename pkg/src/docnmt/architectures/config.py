from __future__ import annotations

import re
from dataclasses import asdict, dataclass, fields, replace

VARIANTS = (
    "baseline",
    "multi_out",
    "multi_in_seq",
    "multi_in_par",
    "wordemb_in_par",
    "seq_emb",
    "single_vec",
    "random_vec",
)
CONTEXT_ENCODER_VARIANTS = ("multi_out", "multi_in_seq", "multi_in_par")
DECODER_GATED_VARIANTS = ("multi_in_seq", "multi_in_par", "wordemb_in_par")
CTXLM_VARIANTS = ("seq_emb", "single_vec")
SEQ_EMB_WHERE = ("e", "d", "e&d")
VEC_AXES = ("T", "F")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    n_layers: int = 6
    d_model: int = 512
    d_ff: int = 2048
    n_heads: int = 8
    variant: str = "baseline"
    context_encoder_layers: int | None = None
    max_positions: int = 256
    seq_emb_where: str | None = None
    vec_axis: str | None = None
    random_seed: int = 0
    # Single Encoder systems: the baseline network fed "context BREAK current".
    concat_context: bool = False
    share_embeddings: bool = True
    dropout: float = 0.0

    def __post_init__(self):
        if self.variant == "random_vec" and self.vec_axis is None:
            object.__setattr__(self, "vec_axis", "T")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.n_layers < 0 or self.vocab_size < 1:
            raise ConfigError("n_layers must be >= 0 and vocab_size >= 1")
        if self.variant == "seq_emb" and self.seq_emb_where not in SEQ_EMB_WHERE:
            raise ConfigError(f"seq_emb needs seq_emb_where in {SEQ_EMB_WHERE}")
        if self.variant != "seq_emb" and self.seq_emb_where is not None:
            raise ConfigError("seq_emb_where is only valid for the seq_emb variant")
        if self.variant == "single_vec" and self.vec_axis not in VEC_AXES:
            raise ConfigError(f"single_vec needs vec_axis in {VEC_AXES}")
        if self.variant == "random_vec" and self.vec_axis not in (None, "T"):
            raise ConfigError("random_vec supports the T axis only")
        if self.variant not in ("single_vec", "random_vec") and self.vec_axis is not None:
            raise ConfigError("vec_axis is only valid for single_vec/random_vec")
        if self.concat_context and self.variant != "baseline":
            raise ConfigError("concat_context applies to the baseline network only")
        if self.variant == "multi_out" and self.n_layers < 1:
            raise ConfigError("multi_out needs at least one encoder layer")

    @property
    def ctx_layers(self) -> int:
        if self.context_encoder_layers is not None:
            return self.context_encoder_layers
        # The Out. variant attends from the last source layer to layer L-1 of the context.
        return self.n_layers - 1 if self.variant == "multi_out" else self.n_layers

    @property
    def uses_context(self) -> bool:
        return self.variant != "baseline" or self.concat_context

    @property
    def needs_ctxlm(self) -> bool:
        return self.variant in CTXLM_VARIANTS

    @property
    def label(self) -> str:
        if self.variant == "seq_emb":
            return f"seq_emb({self.seq_emb_where})"
        if self.variant in ("single_vec", "random_vec"):
            return f"{self.variant}({self.vec_axis or 'T'})"
        if self.concat_context:
            return "single_encoder"
        return self.variant

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def with_variant(self, spec: str, **kw) -> "ModelConfig":
        variant, where, axis = parse_variant(spec)
        return replace(self, variant=variant, seq_emb_where=where, vec_axis=axis, **kw)


def parse_variant(spec: str) -> tuple[str, str | None, str | None]:
    """'seq_emb(e&d)' -> ('seq_emb', 'e&d', None); 'single_vec(T)' -> ('single_vec', None, 'T')."""
    m = re.fullmatch(r"([a-z_]+)(?:\(([^)]*)\))?", spec.strip())
    if not m:
        raise ConfigError(f"bad variant spec {spec!r}")
    name, arg = m.group(1), m.group(2)
    if name == "seq_emb":
        return name, arg, None
    if name in ("single_vec", "random_vec"):
        return name, None, arg or "T"
    if arg is not None:
        raise ConfigError(f"variant {name!r} takes no argument")
    return name, None, None


def base_config(vocab_size: int, variant: str = "baseline") -> ModelConfig:
    """Base Transformer sizes used for the reported systems."""
    return ModelConfig(vocab_size=vocab_size, n_layers=6, d_model=512, d_ff=2048, n_heads=8).with_variant(
        variant
    )
