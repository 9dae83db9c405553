import pytest

from sentryfs import FileSystem, GeometryConfig, MemoryDisk, layout_for
from sentryfs.hashing import Hmac256Engine, new_key
from sentryfs.harness import format_memory_image


def small_config(**overrides) -> GeometryConfig:
    """The desk-scale instance most tests run on: fanout 8, depth 2,
    64 data blocks, 256-byte blocks."""
    params = dict(
        block_size=256,
        digest_size=32,
        fanout=8,
        depth=2,
        data_blocks=64,
        log_blocks=16,
    )
    params.update(overrides)
    return GeometryConfig(**params)


@pytest.fixture
def config():
    return small_config()


@pytest.fixture
def formatted(config):
    """(device, tpm, engine) for a freshly formatted small instance."""
    return format_memory_image(config)


@pytest.fixture
def fs(formatted):
    device, tpm, engine = formatted
    return FileSystem.mount(device, tpm, engine)
