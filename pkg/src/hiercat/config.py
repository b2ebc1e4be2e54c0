"""Engine and service configuration, loadable from an INI file with
command-line flag overrides."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from typing import Optional


@dataclass
class EngineConfig:
    data_dir: Optional[str] = None
    cc_scheme: str = "ospl"
    workers_validate: int = 4
    workers_write: int = 4
    batch_size: int = 1024
    lock_timeout: float = 0.1
    gc_interval: Optional[float] = None  # seconds; None = manual gc_tick only
    retention_floor: int = 0  # 0 = keep all history


@dataclass
class ServiceConfig:
    listen: str = "127.0.0.1:7421"
    engine: EngineConfig = field(default_factory=EngineConfig)

    @property
    def host(self) -> str:
        return self.listen.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.listen.rsplit(":", 1)[1])


def load_config(path: Optional[str] = None, **overrides) -> ServiceConfig:
    """Build a ServiceConfig from an optional INI file plus overrides.

    File layout:

        [server]
        listen = 127.0.0.1:7421
        data_dir = /var/lib/catalog

        [engine]
        cc_scheme = ospl
        workers_validate = 4
        workers_write = 4
        batch_size = 1024
        lock_timeout = 0.1
        gc_interval = 1.0

    Overrides use the flat flag names: listen, data_dir, cc_scheme,
    workers_validate, workers_write, batch_size. None values are ignored.
    """
    engine = EngineConfig()
    listen = ServiceConfig.listen
    if path is not None:
        parser = configparser.ConfigParser()
        with open(path) as fh:
            parser.read_file(fh)
        if parser.has_section("server"):
            listen = parser.get("server", "listen", fallback=listen)
            data_dir = parser.get("server", "data_dir", fallback=None)
            if data_dir:
                engine = replace(engine, data_dir=data_dir)
        if parser.has_section("engine"):
            section = parser["engine"]
            engine = replace(
                engine,
                cc_scheme=section.get("cc_scheme", engine.cc_scheme),
                workers_validate=section.getint("workers_validate", engine.workers_validate),
                workers_write=section.getint("workers_write", engine.workers_write),
                batch_size=section.getint("batch_size", engine.batch_size),
                lock_timeout=section.getfloat("lock_timeout", engine.lock_timeout),
                gc_interval=section.getfloat("gc_interval", engine.gc_interval)
                if section.get("gc_interval")
                else engine.gc_interval,
            )
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "listen":
            listen = value
        elif key in EngineConfig.__dataclass_fields__:
            engine = replace(engine, **{key: value})
        else:
            raise ValueError(f"unknown config override: {key}")
    return ServiceConfig(listen=listen, engine=engine)
