import pytest

from dirmon import EventStore, SimConfig, System


def make_config(**overrides) -> SimConfig:
    params = dict(
        node_count=4,
        manager_node=0,
        backup_nodes=(1,),
        watchdog_timeout_ticks=3,
        recovery_ticks=2,
        rng_seed=7,
        threads_per_node=2,
        seconds_per_tick=1.0,
    )
    params.update(overrides)
    return SimConfig(**params)


@pytest.fixture
def config() -> SimConfig:
    return make_config()


@pytest.fixture
def system(tmp_path, config):
    store = EventStore.create(tmp_path / "run", config)
    return System.spawn(config, store)


def spawn(tmp_path, name="run", **overrides):
    cfg = make_config(**overrides)
    store = EventStore.create(tmp_path / name, cfg)
    return System.spawn(cfg, store), store
