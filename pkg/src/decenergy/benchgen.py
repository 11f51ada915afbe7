"""Deterministic synthetic corpus generator with planted ground truth.

Every record carries all three feature sets and both energy targets, produced
from a known energy law so pipeline stages can be checked against exact
planted parameters:

    base(x)   = e* . x                          (joules, linear part)
    shared(x) = base * (1 + a * sin(log base))  (smooth nonlinearity)
    E_sw      = shared * (1 + sigma * g)        (multiplicative noise)
    E_hw      = (alpha* + beta* * shared) * (1 + sigma * g')

Processor-event columns are drawn log-uniformly inside per-column ranges and
mixed with one shared latent draw, so records lie near a low-dimensional
manifold; the miss <= access inequalities are enforced by clamping.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Optional

import numpy as np

from .errors import InvalidSpec
from .types import (
    PE_FIELD_ORDER,
    BitstreamRecord,
    ClassLabel,
    Codec,
    Condition,
    Dataset,
    DecoderKind,
    EnergySample,
    MeasurementSetup,
    PerfCtcFeatures,
    ProcessorEventVector,
    TemporalFeature,
)

# joules per event; instruction-level events cheap, cache misses expensive
DEFAULT_ENERGY_COEFFICIENTS = (
    5e-10,  # ir
    2e-10,  # dr
    1e-10,  # dw
    1e-8,   # i1mr
    5e-8,   # d1mr
    2e-8,   # d1mw
    5e-8,   # ilmr
    2e-7,   # dlmr
    1e-7,   # dlmw
    5e-11,  # bc
    1e-8,   # bcm
    1e-9,   # bi
    1e-8,   # bim
)

# (low, high) per PE column, spanning the orders of magnitude seen in
# long-running profiled workloads
DEFAULT_PE_RANGES = (
    (1e9, 2e10),   # ir
    (3e8, 8e9),    # dr
    (1e8, 3e9),    # dw
    (1e4, 1e7),    # i1mr
    (1e6, 1e8),    # d1mr
    (3e5, 3e7),    # d1mw
    (5e3, 5e6),    # ilmr
    (2e5, 2e7),    # dlmr
    (1e5, 1e7),    # dlmw
    (1e8, 3e9),    # bc
    (1e6, 1e8),    # bcm
    (1e6, 1e8),    # bi
    (1e4, 3e6),    # bim
)

_CLASS_CYCLE = (ClassLabel.A1, ClassLabel.A2, ClassLabel.A3, ClassLabel.B)
_QP_CYCLE = (22, 27, 32, 37)
_CONDITION_CYCLE = (Condition.RA, Condition.LB)

# clamp order matters: each miss is clamped against its already-clamped feeder
_CLAMP_PAIRS = (
    ("i1mr", "ir"), ("ilmr", "i1mr"),
    ("d1mr", "dr"), ("dlmr", "d1mr"),
    ("d1mw", "dw"), ("dlmw", "d1mw"),
    ("bcm", "bc"), ("bim", "bi"),
)


@dataclass(frozen=True)
class CodecPlan:
    """Planted energy law for one codec/decoder population."""

    codec: Codec
    n_bitstreams: int
    energy_coefficients: tuple[float, ...] = DEFAULT_ENERGY_COEFFICIENTS
    hw_offset: float = 0.2     # alpha*, joules
    hw_scale: float = 0.12     # beta*
    nonlinearity: float = 0.0  # amplitude of the smooth perturbation
    decoder_kind: DecoderKind = DecoderKind.OPTIMIZED
    decoder_name: str = ""

    def __post_init__(self) -> None:
        if self.n_bitstreams < 1:
            raise InvalidSpec(f"n_bitstreams must be >= 1, got {self.n_bitstreams}")
        coeffs = tuple(float(c) for c in self.energy_coefficients)
        if len(coeffs) != len(PE_FIELD_ORDER):
            raise InvalidSpec(
                f"energy_coefficients must have length {len(PE_FIELD_ORDER)}, got {len(coeffs)}"
            )
        if any(c < 0 or not math.isfinite(c) for c in coeffs) or sum(coeffs) <= 0:
            raise InvalidSpec("energy_coefficients must be >= 0 with a positive sum")
        if not math.isfinite(self.hw_offset) or self.hw_offset < 0:
            raise InvalidSpec(f"hw_offset must be >= 0, got {self.hw_offset}")
        if not math.isfinite(self.hw_scale) or self.hw_scale <= 0:
            raise InvalidSpec(f"hw_scale must be > 0, got {self.hw_scale}")
        # beyond 0.5 the multiplier can cross zero and energies go negative
        if not math.isfinite(self.nonlinearity) or abs(self.nonlinearity) > 0.5:
            raise InvalidSpec(f"|nonlinearity| must be <= 0.5, got {self.nonlinearity}")
        object.__setattr__(self, "energy_coefficients", coeffs)

    def label(self) -> str:
        if self.decoder_name:
            return self.decoder_name
        return f"synthetic-{self.codec.value.lower()}-{self.decoder_kind.value[:3]}"


@dataclass(frozen=True)
class GeneratorSpec:
    """Complete description of a synthetic corpus."""

    codecs: tuple[CodecPlan, ...]
    pe_ranges: tuple[tuple[float, float], ...] = DEFAULT_PE_RANGES
    noise_sigma_relative: float = 0.0
    seed: int = 42
    latent_mixing: float = 0.85
    temporal_power_w: float = 4.0
    temporal_offset_j: float = 0.2
    cycles_per_instruction: float = 1.5
    cycles_jitter: float = 0.05

    def __post_init__(self) -> None:
        if not self.codecs:
            raise InvalidSpec("spec needs at least one codec plan")
        object.__setattr__(self, "codecs", tuple(self.codecs))
        ranges = tuple((float(lo), float(hi)) for lo, hi in self.pe_ranges)
        if len(ranges) != len(PE_FIELD_ORDER):
            raise InvalidSpec(f"pe_ranges must have {len(PE_FIELD_ORDER)} (low, high) pairs")
        for name, (lo, hi) in zip(PE_FIELD_ORDER, ranges):
            if not (0 < lo <= hi) or not math.isfinite(hi):
                raise InvalidSpec(f"range for '{name}' must satisfy 0 < low <= high")
        if not math.isfinite(self.noise_sigma_relative) or self.noise_sigma_relative < 0:
            raise InvalidSpec(f"noise_sigma_relative must be >= 0, got {self.noise_sigma_relative}")
        if not 0.0 <= self.latent_mixing <= 1.0:
            raise InvalidSpec(f"latent_mixing must be in [0, 1], got {self.latent_mixing}")
        if self.temporal_power_w <= 0 or self.temporal_offset_j < 0:
            raise InvalidSpec("temporal_power_w must be > 0 and temporal_offset_j >= 0")
        if self.cycles_per_instruction <= 0 or self.cycles_jitter < 0:
            raise InvalidSpec("cycles_per_instruction must be > 0 and cycles_jitter >= 0")
        object.__setattr__(self, "pe_ranges", ranges)


@dataclass(frozen=True)
class GroundTruth:
    """Echo of every planted parameter, written alongside the corpus."""

    spec: GeneratorSpec

    def plan_for(self, codec: Codec, decoder_kind: Optional[DecoderKind] = None) -> CodecPlan:
        for plan in self.spec.codecs:
            if plan.codec is codec and (decoder_kind is None or plan.decoder_kind is decoder_kind):
                return plan
        raise KeyError(f"no plan for codec {codec.value}")


def planted_base_law(plan: CodecPlan, features: np.ndarray) -> float:
    """The shared noiseless energy law: linear part times smooth multiplier."""
    linear = float(np.dot(plan.energy_coefficients, np.asarray(features, dtype=float)))
    if linear <= 0:
        raise InvalidSpec("base law is nonpositive; coefficient/range combination is degenerate")
    return linear * (1.0 + plan.nonlinearity * math.sin(math.log(linear)))


def planted_hw_law(plan: CodecPlan, features: np.ndarray) -> float:
    return plan.hw_offset + plan.hw_scale * planted_base_law(plan, features)


def _draw_event_counts(spec: GeneratorSpec, rng: np.random.Generator) -> dict[str, int]:
    shared = rng.random()
    own = rng.random(len(PE_FIELD_ORDER))
    mix = spec.latent_mixing * shared + (1.0 - spec.latent_mixing) * own
    counts: dict[str, int] = {}
    for name, (lo, hi), v in zip(PE_FIELD_ORDER, spec.pe_ranges, mix):
        value = math.exp(math.log(lo) + v * (math.log(hi) - math.log(lo)))
        counts[name] = max(int(round(value)), 1)
    for miss, access in _CLAMP_PAIRS:
        counts[miss] = min(counts[miss], counts[access])
    return counts


def _noise_factor(sigma: float, draw: float) -> float:
    # keep energies positive even for extreme draws
    return max(1.0 + sigma * draw, 0.05)


def generate(spec: GeneratorSpec) -> tuple[Dataset, GroundTruth]:
    """Produce the corpus and its ground truth; fully determined by `spec`."""
    rng = np.random.default_rng(spec.seed)
    records: list[BitstreamRecord] = []
    for plan_index, plan in enumerate(spec.codecs):
        for i in range(plan.n_bitstreams):
            counts = _draw_event_counts(spec, rng)
            # noise draws happen unconditionally so feature streams are
            # identical across specs that differ only in sigma
            g_cycles, g_sw, g_hw = rng.standard_normal(3)
            vector = ProcessorEventVector.from_mapping(counts)
            x = vector.as_array()
            shared = planted_base_law(plan, x)
            e_sw_clean = shared
            e_hw_clean = plan.hw_offset + plan.hw_scale * shared
            e_sw = e_sw_clean * _noise_factor(spec.noise_sigma_relative, g_sw)
            e_hw = e_hw_clean * _noise_factor(spec.noise_sigma_relative, g_hw)

            t_dec = max((e_sw_clean - spec.temporal_offset_j) / spec.temporal_power_w, 0.0)
            cycles = max(int(round(
                counts["ir"] * spec.cycles_per_instruction
                * (1.0 + spec.cycles_jitter * g_cycles)
            )), 1)

            records.append(BitstreamRecord(
                id=f"{plan.codec.value.lower()}-{plan.decoder_kind.value[:3]}{plan_index}-{i:04d}",
                codec=plan.codec,
                decoder_name=plan.label(),
                decoder_kind=plan.decoder_kind,
                sequence=f"seq-{i % 12:02d}",
                class_label=_CLASS_CYCLE[i % len(_CLASS_CYCLE)],
                qp=_QP_CYCLE[i % len(_QP_CYCLE)],
                condition=_CONDITION_CYCLE[i % len(_CONDITION_CYCLE)],
                temporal=TemporalFeature(t_dec),
                perf=PerfCtcFeatures(instructions=counts["ir"], cycles=cycles, user_time=t_dec),
                valgrind=vector,
                energy_sw=EnergySample(e_sw, MeasurementSetup.MSS),
                energy_hw=EnergySample(e_hw, MeasurementSetup.MSH),
            ))
    dataset = Dataset(tuple(records), provenance=f"benchgen seed={spec.seed}")
    return dataset, GroundTruth(spec)


def default_generator_spec(seed: int = 42) -> GeneratorSpec:
    """Four optimized decoders over one shared base law, mild nonlinearity."""
    plans = tuple(
        CodecPlan(
            codec=codec,
            n_bitstreams=60,
            hw_offset=offset,
            hw_scale=scale,
            nonlinearity=0.1,
        )
        for codec, offset, scale in (
            (Codec.AVC, 0.15, 0.10),
            (Codec.HEVC, 0.20, 0.12),
            (Codec.VP9, 0.18, 0.09),
            (Codec.AV1, 0.30, 0.15),
        )
    )
    return GeneratorSpec(codecs=plans, noise_sigma_relative=0.03, seed=seed)


# --- spec (de)serialization ----------------------------------------------------


def spec_to_dict(spec: GeneratorSpec) -> dict[str, Any]:
    return {
        "codecs": [
            {
                "codec": plan.codec.value,
                "n_bitstreams": plan.n_bitstreams,
                "energy_coefficients": list(plan.energy_coefficients),
                "hw_offset": plan.hw_offset,
                "hw_scale": plan.hw_scale,
                "nonlinearity": plan.nonlinearity,
                "decoder_kind": plan.decoder_kind.value,
                "decoder_name": plan.decoder_name,
            }
            for plan in spec.codecs
        ],
        "pe_ranges": {
            name: [lo, hi] for name, (lo, hi) in zip(PE_FIELD_ORDER, spec.pe_ranges)
        },
        "noise_sigma_relative": spec.noise_sigma_relative,
        "seed": spec.seed,
        "latent_mixing": spec.latent_mixing,
        "temporal_power_w": spec.temporal_power_w,
        "temporal_offset_j": spec.temporal_offset_j,
        "cycles_per_instruction": spec.cycles_per_instruction,
        "cycles_jitter": spec.cycles_jitter,
    }


_SPEC_SCALARS = (
    "noise_sigma_relative", "seed", "latent_mixing", "temporal_power_w",
    "temporal_offset_j", "cycles_per_instruction", "cycles_jitter",
)


def spec_from_dict(payload: dict[str, Any], default_seed: int = 42) -> GeneratorSpec:
    """Build a spec from its JSON form; absent fields fall back to defaults.

    A seed in the file wins over default_seed.
    """
    if not isinstance(payload, dict):
        raise InvalidSpec("generator spec must be a JSON object")
    unknown = set(payload) - set(_SPEC_SCALARS) - {"codecs", "pe_ranges"}
    if unknown:
        raise InvalidSpec(f"unknown generator spec fields: {sorted(unknown)}")

    base = default_generator_spec(seed=default_seed)
    try:
        plans = base.codecs
        if "codecs" in payload:
            plans = tuple(_plan_from_dict(entry) for entry in payload["codecs"])
        ranges = base.pe_ranges
        if "pe_ranges" in payload:
            ranges = _ranges_from_value(payload["pe_ranges"])
        scalars = {
            name: type(getattr(base, name))(payload[name])
            for name in _SPEC_SCALARS if name in payload
        }
        return replace(base, codecs=plans, pe_ranges=ranges, **scalars)
    except InvalidSpec:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpec(f"malformed generator spec: {exc}") from None


def _plan_from_dict(entry: dict[str, Any]) -> CodecPlan:
    if not isinstance(entry, dict):
        raise InvalidSpec("each codec plan must be an object")
    known = {
        "codec", "n_bitstreams", "energy_coefficients", "hw_offset",
        "hw_scale", "nonlinearity", "decoder_kind", "decoder_name",
    }
    unknown = set(entry) - known
    if unknown:
        raise InvalidSpec(f"unknown codec plan fields: {sorted(unknown)}")
    try:
        codec = Codec(entry["codec"])
    except (KeyError, ValueError):
        raise InvalidSpec(f"codec plan needs a valid 'codec', got {entry.get('codec')!r}") from None
    kwargs: dict[str, Any] = {"codec": codec, "n_bitstreams": int(entry["n_bitstreams"])}
    if "energy_coefficients" in entry:
        kwargs["energy_coefficients"] = tuple(float(c) for c in entry["energy_coefficients"])
    for name in ("hw_offset", "hw_scale", "nonlinearity"):
        if name in entry:
            kwargs[name] = float(entry[name])
    if "decoder_kind" in entry:
        try:
            kwargs["decoder_kind"] = DecoderKind(entry["decoder_kind"])
        except ValueError:
            raise InvalidSpec(f"unknown decoder_kind {entry['decoder_kind']!r}") from None
    if "decoder_name" in entry:
        kwargs["decoder_name"] = str(entry["decoder_name"])
    return CodecPlan(**kwargs)


def _ranges_from_value(value: Any) -> tuple[tuple[float, float], ...]:
    if isinstance(value, dict):
        missing = set(PE_FIELD_ORDER) - set(value)
        unknown = set(value) - set(PE_FIELD_ORDER)
        if missing or unknown:
            raise InvalidSpec(
                f"pe_ranges must map exactly the 13 event names; "
                f"missing {sorted(missing)}, unknown {sorted(unknown)}"
            )
        return tuple((float(value[name][0]), float(value[name][1])) for name in PE_FIELD_ORDER)
    return tuple((float(lo), float(hi)) for lo, hi in value)


def ground_truth_to_dict(truth: GroundTruth) -> dict[str, Any]:
    return {"purpose": "ground_truth", "spec": spec_to_dict(truth.spec)}
