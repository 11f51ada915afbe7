import pytest

from decenergy.benchgen import CodecPlan, GeneratorSpec, generate
from decenergy.types import Codec


@pytest.fixture(scope="session")
def small_corpus():
    """40 noisy nonlinear records of one codec; fast enough for GPR fits."""
    spec = GeneratorSpec(
        codecs=(CodecPlan(codec=Codec.HEVC, n_bitstreams=40,
                          hw_offset=0.5, hw_scale=1.2, nonlinearity=0.1),),
        noise_sigma_relative=0.02,
        seed=7,
    )
    return generate(spec)


@pytest.fixture(scope="session")
def cross_codec_corpus():
    """HEVC+VP9 share one hardware transform; AV1 gets a different one."""
    shared = dict(n_bitstreams=50, hw_offset=0.5, hw_scale=1.0, nonlinearity=0.1)
    spec = GeneratorSpec(
        codecs=(
            CodecPlan(codec=Codec.HEVC, **shared),
            CodecPlan(codec=Codec.VP9, **shared),
            CodecPlan(codec=Codec.AV1, n_bitstreams=40,
                      hw_offset=2.0, hw_scale=1.8, nonlinearity=0.1),
        ),
        noise_sigma_relative=0.02,
        seed=13,
    )
    return generate(spec)
